//! Identifiers, roles and the fixed-point rate type shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Wallet identifier. Unique across both DAOs.
    AccountId
);
string_id!(
    /// Identifier of one Superbonus paperwork.
    WorkflowId
);
string_id!(
    /// Code coupling a freeze link with the tax credit it generated.
    CreditCode
);

/// The two token pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DaoId {
    Investors,
    Operators,
}

impl fmt::Display for DaoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DaoId::Investors => f.write_str("investors"),
            DaoId::Operators => f.write_str("operators"),
        }
    }
}

/// Actor role attached to an account at creation.
///
/// `Workflow` marks the escrow wallet owned by a workflow agent; it receives
/// anticipations from the general contractor and pays the operators of the
/// site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Investor,
    Customer,
    FinancialInstitution,
    GeneralContractor,
    SubContractor,
    Supplier,
    DesignArchitect,
    TaxAuditor,
    Workflow,
}

impl Role {
    /// Whether the role may hold tokens of the given DAO.
    pub fn belongs_to(self, dao: DaoId) -> bool {
        match dao {
            DaoId::Investors => matches!(
                self,
                Role::Investor | Role::FinancialInstitution | Role::Customer
            ),
            DaoId::Operators => !matches!(self, Role::Investor),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Non-negative ratio stored in parts per million.
///
/// All token arithmetic applies rates with `floor`, so the integer
/// representation keeps every product exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rate(u64);

impl Rate {
    pub const SCALE: u64 = 1_000_000;
    pub const ZERO: Rate = Rate(0);
    pub const ONE: Rate = Rate(Self::SCALE);

    pub const fn from_ppm(ppm: u64) -> Self {
        Rate(ppm)
    }

    /// Rounds to the nearest part per million. Negative or non-finite input
    /// yields `None`.
    pub fn from_f64(value: f64) -> Option<Self> {
        if !value.is_finite() || value < 0.0 {
            return None;
        }
        let ppm = (value * Self::SCALE as f64).round();
        if ppm > u64::MAX as f64 {
            return None;
        }
        Some(Rate(ppm as u64))
    }

    pub const fn ppm(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    /// `floor(self × amount)`.
    pub fn apply_floor(self, amount: u64) -> u64 {
        let product = u128::from(self.0) * u128::from(amount) / u128::from(Self::SCALE);
        u64::try_from(product).unwrap_or(u64::MAX)
    }

    /// Smallest `x` with `floor(self × x) >= target`. `None` for a zero rate.
    pub fn min_input_for(self, target: u64) -> Option<u64> {
        if self.0 == 0 {
            return (target == 0).then_some(0);
        }
        let numer = u128::from(target) * u128::from(Self::SCALE);
        let x = numer.div_ceil(u128::from(self.0));
        u64::try_from(x).ok()
    }

    pub fn checked_sub(self, other: Rate) -> Option<Rate> {
        self.0.checked_sub(other.0).map(Rate)
    }

    pub fn is_unit_interval(self) -> bool {
        self.0 <= Self::SCALE
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / Self::SCALE;
        let frac = self.0 % Self::SCALE;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_application_is_exact() {
        assert_eq!(Rate::from_f64(0.9).unwrap().apply_floor(100), 90);
        assert_eq!(Rate::from_f64(0.95).unwrap().apply_floor(100), 95);
        assert_eq!(Rate::from_f64(1.1).unwrap().apply_floor(100), 110);
        assert_eq!(Rate::from_f64(0.3).unwrap().apply_floor(1_000_000), 300_000);
        assert_eq!(Rate::from_f64(0.95).unwrap().apply_floor(33), 31);
    }

    #[test]
    fn min_input_inverts_floor() {
        let rate = Rate::from_f64(0.9).unwrap();
        for target in [0u64, 1, 89, 90, 91, 300_000, 299_999] {
            let x = rate.min_input_for(target).unwrap();
            assert!(rate.apply_floor(x) >= target);
            if x > 0 {
                assert!(rate.apply_floor(x - 1) < target);
            }
        }
        assert_eq!(Rate::ZERO.min_input_for(5), None);
    }

    #[test]
    fn display_trims() {
        assert_eq!(Rate::from_f64(0.9).unwrap().to_string(), "0.9");
        assert_eq!(Rate::ONE.to_string(), "1");
        assert_eq!(Rate::from_f64(1.05).unwrap().to_string(), "1.05");
    }

    #[test]
    fn rejects_negative() {
        assert!(Rate::from_f64(-0.1).is_none());
        assert!(Rate::from_f64(f64::NAN).is_none());
    }
}
