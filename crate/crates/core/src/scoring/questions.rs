use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The fourteen expectation questions. Each completes the sentence
/// "Over the next quarter, how does the firm anticipate a change in ...?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionId {
    EconomyUs,
    EconomyGlobal,
    FirmProspects,
    IndustryProspects,
    Earnings,
    Revenue,
    Capx,
    Wages,
    Employees,
    Demand,
    Production,
    ProductPrice,
    InputPrice,
    CostOfCapital,
}

impl QuestionId {
    pub const ALL: [QuestionId; 14] = [
        QuestionId::EconomyUs,
        QuestionId::EconomyGlobal,
        QuestionId::FirmProspects,
        QuestionId::IndustryProspects,
        QuestionId::Earnings,
        QuestionId::Revenue,
        QuestionId::Capx,
        QuestionId::Wages,
        QuestionId::Employees,
        QuestionId::Demand,
        QuestionId::Production,
        QuestionId::ProductPrice,
        QuestionId::InputPrice,
        QuestionId::CostOfCapital,
    ];

    pub fn id(self) -> &'static str {
        match self {
            QuestionId::EconomyUs => "economy_us",
            QuestionId::EconomyGlobal => "economy_global",
            QuestionId::FirmProspects => "firm_prospects",
            QuestionId::IndustryProspects => "industry_prospects",
            QuestionId::Earnings => "earnings",
            QuestionId::Revenue => "revenue",
            QuestionId::Capx => "capx",
            QuestionId::Wages => "wages",
            QuestionId::Employees => "employees",
            QuestionId::Demand => "demand",
            QuestionId::Production => "production",
            QuestionId::ProductPrice => "product_price",
            QuestionId::InputPrice => "input_price",
            QuestionId::CostOfCapital => "cost_of_capital",
        }
    }

    pub fn clause(self) -> &'static str {
        match self {
            QuestionId::EconomyUs => "optimism about the US economy",
            QuestionId::EconomyGlobal => "optimism about the global economy",
            QuestionId::FirmProspects => "the firm's financial prospects",
            QuestionId::IndustryProspects => "the industry's financial prospects",
            QuestionId::Earnings => "earnings",
            QuestionId::Revenue => "revenue",
            QuestionId::Capx => "investments",
            QuestionId::Wages => "wages and salaries expenses",
            QuestionId::Employees => "number of employees",
            QuestionId::Demand => "demand for its products or services",
            QuestionId::Production => "production quantity of its products",
            QuestionId::ProductPrice => "product or service prices",
            QuestionId::InputPrice => "input or commodity prices",
            QuestionId::CostOfCapital => "the cost of capital",
        }
    }

    /// Parses `all` or a comma-separated list of ids.
    pub fn parse_set(spec: &str) -> Result<Vec<QuestionId>> {
        if spec.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::ALL.to_vec());
        }
        let mut out: Vec<QuestionId> =
            spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::invalid("empty question set"));
        }
        Ok(out)
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for QuestionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|q| q.id() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown question `{s}`")))
    }
}
