//! Passwords, bearer tokens and the role rules.

use argon2::password_hash::phc::PasswordHash;
use argon2::password_hash::{PasswordHasher, PasswordVerifier};
use argon2::Argon2;
use patchswipe_core::{ParticipantId, StudyId};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Admin,
    Participant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Participant => "participant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "admin" => Some(Role::Admin),
            "participant" => Some(Role::Participant),
            _ => None,
        }
    }
}

/// An authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Principal {
    pub username: ParticipantId,
    pub role: Role,
}

/// What a request is trying to do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action<'a> {
    /// Groups, users, datasets, study setup, exports and reports.
    Administer,
    /// Annotating in, or viewing progress of, a study. `assigned` tells
    /// whether the caller is among the study's participants.
    Annotate { study: &'a StudyId, assigned: bool },
    ListStudies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("forbidden")]
    Forbidden,
}

pub fn authorize(principal: &Principal, action: &Action<'_>) -> Result<(), AuthError> {
    match action {
        Action::Administer if principal.role == Role::Admin => Ok(()),
        Action::Administer => Err(AuthError::Forbidden),
        Action::Annotate { assigned: true, .. } => Ok(()),
        Action::Annotate { .. } => Err(AuthError::Forbidden),
        Action::ListStudies => Ok(()),
    }
}

pub fn hash_password(password: &str) -> String {
    Argon2::default()
        .hash_password(password.as_bytes())
        .expect("argon2 with default parameters accepts any password")
        .to_string()
}

pub fn verify_password(password: &str, stored: &str) -> bool {
    match PasswordHash::new(stored) {
        Ok(parsed) => Argon2::default()
            .verify_password(password.as_bytes(), &parsed)
            .is_ok(),
        Err(_) => false,
    }
}

/// 256 random bits, hex encoded.
pub fn new_token() -> String {
    let mut bytes = [0u8; 32];
    rand::thread_rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}
