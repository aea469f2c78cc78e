//! Deterministic synthetic inputs: transcripts, macro levels, firm sales and VAR series.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::composite::FirmSales;
use crate::corpus::{write_corpus, Sector, Transcript};
use crate::error::{Error, Result};
use crate::period::Quarter;
use crate::var_engine::{simulate, VarModel, DEFAULT_ORDER};

pub const FIRMS: [(&str, &str, Sector); 8] = [
    ("F01", "Northwind Fabrication", Sector::Manufacturing),
    ("F02", "Bellhaven Tools", Sector::Manufacturing),
    ("F03", "Corvid Savings", Sector::Finance),
    ("F04", "Halden Assurance", Sector::Finance),
    ("F05", "Tamsin Outfitters", Sector::RetailTrade),
    ("F06", "Quayside Grocers", Sector::RetailTrade),
    ("F07", "Lumen Networks", Sector::Information),
    ("F08", "Parallax Software", Sector::Information),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub first_quarter: Quarter,
    pub quarters: usize,
    pub var_quarters: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { seed: 7, first_quarter: Quarter::new(2021, 1).expect("valid quarter"), quarters: 10, var_quarters: 80 }
    }
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

const UPBEAT: &[&str] = &[
    "Demand across our core markets remained strong and order books are filling ahead of plan.",
    "We expect revenue to grow next quarter as new contracts begin to ship.",
    "Pricing held firm and we see room for further increases in the coming months.",
    "We plan to expand capacity and add staff in our largest facilities.",
    "Customers continue to signal healthy spending for the rest of the year.",
    "Margins improved as input costs eased and volumes picked up.",
];

const CAUTIOUS: &[&str] = &[
    "Visibility is limited and we are preparing for softer demand next quarter.",
    "Higher input and freight costs continue to pressure margins.",
    "We have slowed hiring and deferred some capital projects until conditions improve.",
    "Rising interest rates have made customers more careful with large orders.",
    "We expect earnings to decline modestly while inventories normalize.",
    "Several clients delayed purchases, and we now see a weaker pipeline.",
];

const NEUTRAL: &[&str] = &[
    "Thank you all for joining the call today.",
    "Let me now turn to the segment results in more detail.",
    "Our balance sheet remains solid with ample liquidity.",
    "We will take questions after the prepared remarks.",
    "Operating expenses were in line with the guidance we gave last time.",
    "The board approved the regular quarterly dividend.",
];

fn call_text(rng: &mut ChaCha8Rng, firm_name: &str, q: Quarter, tone: f64, long: bool) -> String {
    let mut text = String::new();
    let month = MONTHS[usize::from(q.quarter) * 3 - 1];
    let _ = write!(
        text,
        "Good morning and welcome to the {firm_name} results call for the quarter ended {month} {}. ",
        q.year
    );
    let sentences = if long { rng.random_range(190..230) } else { rng.random_range(14..26) };
    for i in 0..sentences {
        let bank = match rng.random::<f64>() {
            u if u < 0.35 + 0.25 * tone => UPBEAT,
            u if u < 0.70 => NEUTRAL,
            _ => CAUTIOUS,
        };
        text.push_str(bank.choose(rng).expect("bank is non-empty"));
        text.push(' ');
        if i % 7 == 3 {
            let _ = write!(
                text,
                "Compared with {} {}, {firm_name} grew its customer base. ",
                MONTHS[rng.random_range(0..12)],
                q.year - 1
            );
        }
    }
    text.trim_end().to_string()
}

/// Each firm holds a call in every other quarter, about half the firm-quarters.
pub fn corpus(spec: &SyntheticSpec) -> Vec<Transcript> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for i in 0..spec.quarters {
        let q = spec.first_quarter.offset(i as i64);
        let tone = (i as f64 * 0.9).sin();
        for (f, (id, name, sector)) in FIRMS.iter().enumerate() {
            if (i + f) % 2 != 0 {
                continue;
            }
            let long = i == 2 && f < 2;
            let month = usize::from(q.quarter) * 3 - 2 + 1;
            out.push(Transcript {
                call_id: format!("{id}-{q}"),
                firm_id: id.to_string(),
                sector: *sector,
                quarter: q,
                call_date: format!("{}-{month:02}-{:02}", q.year, 10 + f),
                text: call_text(&mut rng, name, q, tone, long),
            });
        }
    }
    out
}

/// Quarterly macro levels covering eight quarters either side of the corpus.
pub fn macro_csv(spec: &SyntheticSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x006d_6163_726f);
    let start = spec.first_quarter.offset(-8);
    let mut levels = [18_000.0f64, 12_500.0, 3_200.0];
    let drift = [0.005, 0.004, 0.006];
    let vol = [0.004, 0.003, 0.012];
    let mut out = String::from("period,real_gdp,real_consumption,real_investment,term_spread,default_spread\n");
    for i in 0..spec.quarters + 16 {
        let q = start.offset(i as i64);
        let common: f64 = StandardNormal.sample(&mut rng);
        for (k, level) in levels.iter_mut().enumerate() {
            let own: f64 = StandardNormal.sample(&mut rng);
            *level *= (drift[k] + vol[k] * (0.7 * common + 0.3 * own)).exp();
        }
        let spread = 1.2 + 0.4 * (i as f64 / 5.0).sin() + 0.1 * rng.random::<f64>();
        let default = 0.9 + 0.2 * (i as f64 / 7.0).cos() + 0.05 * rng.random::<f64>();
        let _ = writeln!(out, "{q},{:.3},{:.3},{:.3},{spread:.4},{default:.4}", levels[0], levels[1], levels[2]);
    }
    out
}

/// Firm sales levels from two quarters before the corpus to one after it.
pub fn firm_sales(spec: &SyntheticSpec) -> FirmSales {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0073_616c_6573);
    let mut sales = FirmSales::default();
    for (f, (id, _, _)) in FIRMS.iter().enumerate() {
        let mut level = 500.0 + 150.0 * f as f64;
        for i in 0..spec.quarters + 3 {
            let q = spec.first_quarter.offset(i as i64 - 2);
            let shock: f64 = StandardNormal.sample(&mut rng);
            level *= (0.01 + 0.03 * shock).exp();
            sales.levels.insert((id.to_string(), q), (level * 100.0).round() / 100.0);
        }
    }
    sales
}

/// Eight-variable series from a stable VAR(1), in the default recursive order.
pub fn var_csv(spec: &SyntheticSpec) -> String {
    let k = DEFAULT_ORDER.len();
    let a = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.5
        } else if j + 1 == i {
            0.1
        } else {
            0.0
        }
    });
    let chol = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else if i > j {
            0.2
        } else {
            0.0
        }
    });
    let model = VarModel {
        names: DEFAULT_ORDER.iter().map(|s| s.to_string()).collect(),
        intercept: DVector::from_element(k, 0.1),
        coefs: vec![a],
        std_errors: vec![],
        sigma: &chol * chol.transpose(),
        chol: chol.clone(),
        residuals: DMatrix::zeros(0, k),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x0076_6172);
    let z = DMatrix::from_fn(spec.var_quarters - 1, k, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    let shocks = z * chol.transpose();
    let y = simulate(&model, &DMatrix::from_element(1, k, 0.2), &shocks);
    let start = spec.first_quarter.offset(-(spec.var_quarters as i64) + spec.quarters as i64);
    let mut out = format!("period,{}\n", DEFAULT_ORDER.join(","));
    for t in 0..y.nrows() {
        let row: Vec<String> = y.row(t).iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{},{}", start.offset(t as i64), row.join(","));
    }
    out
}

pub const GAZETTEER: &str = "organization\tNorthwind Fabrication\norganization\tBellhaven Tools\norganization\tCorvid Savings\norganization\tHalden Assurance\norganization\tTamsin Outfitters\norganization\tQuayside Grocers\norganization\tLumen Networks\norganization\tParallax Software\n";

/// Writes corpus.jsonl, macro.csv, firm_sales.csv, var.csv and gazetteer.tsv.
pub fn write_bundle(dir: &Path, spec: &SyntheticSpec) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_corpus(&dir.join("corpus.jsonl"), &corpus(spec))?;
    let put = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    put("macro.csv", macro_csv(spec))?;
    put("var.csv", var_csv(spec))?;
    put("gazetteer.tsv", GAZETTEER.to_string())?;
    firm_sales(spec).write_csv(&dir.join("firm_sales.csv"))
}
