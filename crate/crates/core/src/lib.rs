//! Symbolic execution engine, Dolev-Yao attacker harness and property
//! checker for the UTX unlinkable smart-card payment protocol.
//!
//! * [`term`] — message algebra and weak normal forms;
//! * [`frame`] — attacker knowledge, deduction and static equivalence;
//! * [`setup`] — authority, card issuance, terminal and bank provisioning;
//! * [`roles`] — card, terminal and bank state machines;
//! * [`harness`] — attacker-mediated scenario execution and paired runs;
//! * [`checks`] — agreement, secrecy and unlinkability verdicts;
//! * [`concrete`] — toy numeric backend for differential testing.

pub mod term;
pub mod frame;
pub mod setup;
pub mod roles;
pub mod harness;
pub mod checks;
pub mod concrete;
