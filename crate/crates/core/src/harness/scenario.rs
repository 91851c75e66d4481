//! Declarative scenario descriptions and their line-oriented text format.
//!
//! ```text
//! # comment
//! world real                      # real | ideal
//! protocol utx                    # utx | utx_multimonth | utxl | bdh | ubdh
//! cards 1 1                       # issue month of each card
//! terminals onhi:1 lo:1           # mode:month of each terminal
//! month 1                         # current month (bulletin)
//! horizon 3
//! sessions 0:0 1:1                # card:terminal pairs
//! strategy passive                # catalog entry, see `builtin_strategies`
//! replay_check on
//! terminal_checks_month_cert on
//! chi_leaked none                 # or a month
//! pin_leaked off
//! wrong_pin off
//! seed 7
//! ```

use std::fmt;
use std::str::FromStr;

use super::HarnessError;
use crate::roles::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum World {
    /// Cards take part in any number of sessions.
    Real,
    /// Every card session is run by a freshly issued card.
    Ideal,
}

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            World::Real => "real",
            World::Ideal => "ideal",
        })
    }
}

impl FromStr for World {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(World::Real),
            "ideal" => Ok(World::Ideal),
            _ => Err(format!("unknown world {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Utx,
    UtxMultimonth,
    /// Contactless low-value subsystem.
    Utxl,
    /// Linkable control.
    Bdh,
    /// Unlinkable control.
    Ubdh,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Utx,
        Protocol::UtxMultimonth,
        Protocol::Utxl,
        Protocol::Bdh,
        Protocol::Ubdh,
    ];
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Utx => "utx",
            Protocol::UtxMultimonth => "utx_multimonth",
            Protocol::Utxl => "utxl",
            Protocol::Bdh => "bdh",
            Protocol::Ubdh => "ubdh",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

/// Toggles for threat-model variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Options {
    /// Bank refuses a second cryptogram with the same `(PAN, TX, a)`.
    pub replay_check: bool,
    /// Terminals verify the month certificate signature.
    pub terminal_checks_month_cert: bool,
    /// The month key of this month is given to the attacker.
    pub chi_leaked: Option<u32>,
    /// Every card session start publishes a cardholder PIN.
    pub pin_leaked: bool,
    /// Cardholders type a wrong PIN.
    pub wrong_pin: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            replay_check: true,
            terminal_checks_month_cert: true,
            chi_leaked: None,
            pin_leaked: false,
            wrong_pin: false,
        }
    }
}

/// One experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub world: World,
    pub protocol: Protocol,
    /// Issue month of each card (first window month for multimonth cards).
    pub cards: Vec<u32>,
    /// Mode and month of each terminal.
    pub terminals: Vec<(Mode, u32)>,
    /// Current month: month keys up to this one are public.
    pub month: u32,
    pub horizon: u32,
    /// Transactions as `(card, terminal)` pairs.
    pub sessions: Vec<(usize, usize)>,
    /// Name of a catalog strategy.
    pub strategy: String,
    pub options: Options,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            world: World::Real,
            protocol: Protocol::Utx,
            cards: vec![1],
            terminals: vec![(Mode::OnHi, 1)],
            month: 1,
            horizon: 3,
            sessions: vec![(0, 0)],
            strategy: "passive".into(),
            options: Options::default(),
            seed: 0,
        }
    }
}

/// Names accepted by [`Scenario::named`].
pub const NAMED_SCENARIOS: [&str; 13] = [
    "honest_onhi",
    "honest_offhi",
    "honest_lo",
    "wrong_pin_offhi",
    "fake_card",
    "compromised_terminal",
    "leaked_chi",
    "cryptogram_replay",
    "month_probe",
    "bdh",
    "ubdh",
    "utxl",
    "utxmm",
];

impl Scenario {
    /// A built-in scenario.
    pub fn named(name: &str) -> Option<Scenario> {
        let base = Scenario::default();
        let honest = |mode| Scenario {
            terminals: vec![(mode, 1)],
            ..base.clone()
        };
        Some(match name {
            "honest_onhi" => honest(Mode::OnHi),
            "honest_offhi" => honest(Mode::OffHi),
            "honest_lo" => honest(Mode::Lo),
            "wrong_pin_offhi" => Scenario {
                options: Options { wrong_pin: true, ..Options::default() },
                ..honest(Mode::OffHi)
            },
            "fake_card" => Scenario {
                terminals: vec![(Mode::OnHi, 1), (Mode::Lo, 1)],
                sessions: vec![(0, 1)],
                strategy: "fake_card".into(),
                ..base.clone()
            },
            "compromised_terminal" => Scenario {
                terminals: vec![(Mode::OnHi, 1), (Mode::Lo, 1)],
                sessions: vec![(0, 0)],
                strategy: "fake_card".into(),
                options: Options { terminal_checks_month_cert: false, ..Options::default() },
                ..base.clone()
            },
            "leaked_chi" => Scenario {
                terminals: vec![(Mode::OnHi, 1), (Mode::Lo, 1)],
                sessions: vec![(0, 0)],
                strategy: "fake_card".into(),
                options: Options { chi_leaked: Some(1), ..Options::default() },
                ..base.clone()
            },
            "cryptogram_replay" => Scenario {
                terminals: vec![(Mode::Lo, 1)],
                strategy: "cryptogram_replay".into(),
                ..base.clone()
            },
            "month_probe" => Scenario {
                cards: vec![2],
                terminals: vec![(Mode::Lo, 0), (Mode::Lo, 2)],
                month: 2,
                sessions: vec![(0, 1)],
                strategy: "month_probe".into(),
                ..base.clone()
            },
            "bdh" => Scenario {
                protocol: Protocol::Bdh,
                sessions: vec![(0, 0), (0, 0)],
                strategy: "key_probe".into(),
                ..base.clone()
            },
            "ubdh" => Scenario {
                protocol: Protocol::Ubdh,
                sessions: vec![(0, 0), (0, 0)],
                strategy: "key_probe".into(),
                ..base.clone()
            },
            "utxl" => Scenario {
                protocol: Protocol::Utxl,
                terminals: vec![(Mode::Lo, 1), (Mode::Lo, 1)],
                sessions: vec![(0, 0), (0, 1)],
                options: Options { pin_leaked: true, replay_check: false, ..Options::default() },
                ..base.clone()
            },
            "utxmm" => Scenario {
                protocol: Protocol::UtxMultimonth,
                cards: vec![0],
                terminals: vec![(Mode::Lo, 1), (Mode::Lo, 2)],
                month: 2,
                horizon: 4,
                sessions: vec![(0, 1), (0, 0)],
                options: Options { replay_check: false, ..Options::default() },
                ..base.clone()
            },
            _ => return None,
        })
    }

    /// Checks internal consistency.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::ScenarioInvalid(m));
        if self.cards.is_empty() {
            return bad("at least one card is required".into());
        }
        if self.terminals.is_empty() {
            return bad("at least one terminal is required".into());
        }
        if self.month >= self.horizon {
            return bad(format!("month {} outside horizon {}", self.month, self.horizon));
        }
        for &(c, t) in &self.sessions {
            if c >= self.cards.len() || t >= self.terminals.len() {
                return bad(format!("session {c}:{t} names a missing card or terminal"));
            }
        }
        for &(_, m) in &self.terminals {
            if m >= self.horizon {
                return bad(format!("terminal month {m} outside horizon {}", self.horizon));
            }
        }
        if let Some(m) = self.options.chi_leaked {
            if m >= self.horizon {
                return bad(format!("leaked month {m} outside horizon {}", self.horizon));
            }
        }
        Ok(())
    }

    /// Parses the text format; unspecified keys keep their defaults.
    pub fn parse(src: &str) -> Result<Scenario, HarnessError> {
        fn split_pair<'s>(
            v: &'s str,
            err: impl Fn(String) -> HarnessError,
        ) -> Result<(&'s str, &'s str), HarnessError> {
            v.split_once(':').ok_or_else(|| err(format!("expected a:b, found {v:?}")))
        }
        let mut sc = Scenario::default();
        for (lineno, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| HarnessError::Parse(format!("line {}: {m}", lineno + 1));
            let mut words = line.split_whitespace();
            let key = words.next().unwrap_or("");
            let vals: Vec<&str> = words.collect();
            let one = || -> Result<&str, HarnessError> {
                match vals.as_slice() {
                    [v] => Ok(v),
                    _ => Err(err(format!("{key} takes one value"))),
                }
            };
            let flag = || -> Result<bool, HarnessError> {
                match one()? {
                    "on" | "true" | "yes" => Ok(true),
                    "off" | "false" | "no" => Ok(false),
                    v => Err(err(format!("expected on/off, found {v:?}"))),
                }
            };
            let num = |v: &str| -> Result<u64, HarnessError> {
                v.parse().map_err(|_| err(format!("expected a number, found {v:?}")))
            };
            let pair = |v| split_pair(v, err);
            match key {
                "world" => sc.world = one()?.parse().map_err(err)?,
                "protocol" => sc.protocol = one()?.parse().map_err(err)?,
                "cards" => {
                    sc.cards = vals.iter().map(|v| num(v).map(|n| n as u32)).collect::<Result<_, _>>()?
                }
                "terminals" => {
                    sc.terminals = vals
                        .iter()
                        .map(|v| {
                            let (m, mo) = pair(v)?;
                            Ok((m.parse().map_err(err)?, num(mo)? as u32))
                        })
                        .collect::<Result<_, HarnessError>>()?
                }
                "month" => sc.month = num(one()?)? as u32,
                "horizon" => sc.horizon = num(one()?)? as u32,
                "sessions" => {
                    sc.sessions = vals
                        .iter()
                        .map(|v| {
                            let (c, t) = pair(v)?;
                            Ok((num(c)? as usize, num(t)? as usize))
                        })
                        .collect::<Result<_, HarnessError>>()?
                }
                "strategy" => sc.strategy = one()?.to_string(),
                "replay_check" => sc.options.replay_check = flag()?,
                "terminal_checks_month_cert" => sc.options.terminal_checks_month_cert = flag()?,
                "chi_leaked" => {
                    sc.options.chi_leaked = match one()? {
                        "none" => None,
                        v => Some(num(v)? as u32),
                    }
                }
                "pin_leaked" => sc.options.pin_leaked = flag()?,
                "wrong_pin" => sc.options.wrong_pin = flag()?,
                "seed" => sc.seed = num(one()?)?,
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        sc.validate()?;
        Ok(sc)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on = |b: bool| if b { "on" } else { "off" };
        let join = |xs: Vec<String>| xs.join(" ");
        writeln!(f, "world {}", self.world)?;
        writeln!(f, "protocol {}", self.protocol)?;
        writeln!(f, "cards {}", join(self.cards.iter().map(|m| m.to_string()).collect()))?;
        writeln!(
            f,
            "terminals {}",
            join(self.terminals.iter().map(|(m, mo)| format!("{m}:{mo}")).collect())
        )?;
        writeln!(f, "month {}", self.month)?;
        writeln!(f, "horizon {}", self.horizon)?;
        writeln!(
            f,
            "sessions {}",
            join(self.sessions.iter().map(|(c, t)| format!("{c}:{t}")).collect())
        )?;
        writeln!(f, "strategy {}", self.strategy)?;
        writeln!(f, "replay_check {}", on(self.options.replay_check))?;
        writeln!(f, "terminal_checks_month_cert {}", on(self.options.terminal_checks_month_cert))?;
        match self.options.chi_leaked {
            Some(m) => writeln!(f, "chi_leaked {m}")?,
            None => writeln!(f, "chi_leaked none")?,
        }
        writeln!(f, "pin_leaked {}", on(self.options.pin_leaked))?;
        writeln!(f, "wrong_pin {}", on(self.options.wrong_pin))?;
        writeln!(f, "seed {}", self.seed)
    }
}
