// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Teleoperation configuration: gamepad (uni) or joint-coupled master (bi),
/// with or without the virtual fixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Uni,
    Bi,
    UniVf,
    BiVf,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Uni, Mode::Bi, Mode::UniVf, Mode::BiVf];

    pub fn vf(self) -> bool {
        matches!(self, Mode::UniVf | Mode::BiVf)
    }

    pub fn bilateral(self) -> bool {
        matches!(self, Mode::Bi | Mode::BiVf)
    }

    /// Identifier used in files and on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Mode::Uni => "uni",
            Mode::Bi => "bi",
            Mode::UniVf => "uni_vf",
            Mode::BiVf => "bi_vf",
        }
    }

    /// Column label in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Uni => "uni",
            Mode::Bi => "bi",
            Mode::UniVf => "uni-VF",
            Mode::BiVf => "bi-VF",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Mode::ALL
            .into_iter()
            .find(|m| m.key() == s || m.label() == s)
            .ok_or_else(|| Error::invalid("mode", format!("unknown mode `{s}` (expected uni, bi, uni_vf or bi_vf)")))
    }
}
