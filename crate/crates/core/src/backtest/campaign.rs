//! Backtest campaigns: a grid of sample times, a random book per sample,
//! VaR per model and level, realized outcomes and the test tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chrono::DateTime;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::coverage::binomial_coverage;
use super::independence::{
    averaged_f_p_value, chi2_1_critical, christoffersen_lr, regression_independence_f, split_groups,
    weighted_average, FTestReport, LrReport, MissingCell,
};
use super::pnl::{expost_realized_covariance, realized_pnl};
use super::{BacktestError, Result, ViolationSeries};
use crate::market::{minute_of, Instrument, InstrumentKind};
use crate::sim::{SimConfig, SyntheticMarket};
use crate::stats::chi_squared_sf;
use crate::var::{forecast_covariance, map_portfolio, transform, EngineConfig, MarkHistory, Position, QuoteSource, TwapSource};
use crate::vol::Model;
use crate::{EpochMillis, DAY_MS, MINUTE_MS};

/// Everything a campaign reads from the market.
pub trait QuoteHistory: TwapSource + MarkHistory + Sync {
    /// Quotes as seen at `t`.
    fn quotes_at(&self, t: EpochMillis) -> Box<dyn QuoteSource + '_>;
    /// Tradable products to draw books from.
    fn products(&self) -> &[Instrument];
}

impl QuoteHistory for SyntheticMarket {
    fn quotes_at(&self, t: EpochMillis) -> Box<dyn QuoteSource + '_> {
        Box::new(self.snapshot(t))
    }

    fn products(&self) -> &[Instrument] {
        self.instruments()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// RFC 3339 instant of the first sample.
    pub start: String,
    /// RFC 3339 instant; samples are strictly before it.
    pub end: String,
    pub stride_minutes: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            start: "2024-01-16T00:00:00Z".into(),
            end: "2024-02-04T00:00:00Z".into(),
            stride_minutes: 60,
        }
    }
}

fn parse_instant(s: &str) -> Result<EpochMillis> {
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.timestamp_millis())
        .map_err(|e| BacktestError::Config(format!("bad instant {s:?}: {e}")))
}

impl GridSpec {
    pub fn times(&self) -> Result<Vec<EpochMillis>> {
        let (a, b) = (parse_instant(&self.start)?, parse_instant(&self.end)?);
        if self.stride_minutes == 0 || a >= b {
            return Err(BacktestError::Config(format!(
                "empty grid {}..{} every {} min",
                self.start, self.end, self.stride_minutes
            )));
        }
        Ok((a..b).step_by(self.stride_minutes as usize * MINUTE_MS as usize).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioSpec {
    pub seed: u64,
    /// Distinct products per book.
    pub holdings: usize,
    pub min_quantity: f64,
    pub max_quantity: f64,
    pub short_probability: f64,
    /// Books are redrawn until `sum V > min_net_ratio * sum |V|`.
    pub min_net_ratio: f64,
    /// Products must outlive the horizon by this many days.
    pub min_life_days: f64,
}

impl Default for PortfolioSpec {
    fn default() -> Self {
        PortfolioSpec {
            seed: 7,
            holdings: 10,
            min_quantity: 0.5,
            max_quantity: 3.0,
            short_probability: 0.2,
            min_net_ratio: 0.3,
            min_life_days: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub models: Vec<Model>,
    pub levels: Vec<f64>,
    pub horizon_days: f64,
    pub groups: usize,
    pub lags: usize,
    pub grid: GridSpec,
    pub portfolio: PortfolioSpec,
    pub market: SimConfig,
    pub coverage_significance: f64,
    pub independence_significance: f64,
    /// Adds a realized-covariance benchmark row.
    pub include_expost: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            models: Model::ALL.to_vec(),
            levels: vec![0.95, 0.975, 0.99],
            horizon_days: 1.0,
            groups: 6,
            lags: 4,
            grid: GridSpec::default(),
            portfolio: PortfolioSpec::default(),
            market: SimConfig {
                days: 36,
                ..SimConfig::default()
            },
            coverage_significance: 0.01,
            independence_significance: 0.05,
            include_expost: true,
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: CampaignConfig = toml::from_str(s).map_err(|e| BacktestError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BacktestError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BacktestError::Config(m));
        if self.models.is_empty() && !self.include_expost {
            return bad("no models".into());
        }
        if self.models.contains(&Model::ExPost) {
            return bad("EXPOST is a benchmark; enable include_expost instead".into());
        }
        if self.levels.is_empty() || self.levels.iter().any(|&l| !(l > 0.5 && l < 1.0)) {
            return bad(format!("levels {:?} must lie in (0.5, 1)", self.levels));
        }
        if !(self.horizon_days > 0.0 && self.horizon_days.is_finite()) {
            return bad(format!("horizon {} must be positive", self.horizon_days));
        }
        if !(1..=24).contains(&self.groups) || self.lags == 0 {
            return bad(format!("{} groups / {} lags", self.groups, self.lags));
        }
        for s in [self.coverage_significance, self.independence_significance] {
            if !(s > 0.0 && s < 1.0) {
                return bad(format!("significance {s} outside (0, 1)"));
            }
        }
        let p = &self.portfolio;
        if p.holdings == 0 || !(p.min_quantity > 0.0 && p.min_quantity <= p.max_quantity) {
            return bad("portfolio holdings and quantity range must be positive".into());
        }
        self.grid.times()?;
        Ok(())
    }

    fn cell_models(&self) -> Vec<Model> {
        let mut m = self.models.clone();
        if self.include_expost {
            m.push(Model::ExPost);
        }
        m
    }
}

/// Draws a random long-biased book from the products alive over
/// `[t0, t0 + horizon + min_life]`. `None` if no acceptable book is found.
pub fn generate_portfolio(
    pid: &str,
    products: &[Instrument],
    marks: &dyn MarkHistory,
    t0: EpochMillis,
    horizon_days: f64,
    spec: &PortfolioSpec,
    rng: &mut impl Rng,
) -> Option<Vec<Position>> {
    let horizon_ms = (horizon_days * DAY_MS as f64) as EpochMillis;
    let alive_until = t0 + horizon_ms + (spec.min_life_days * DAY_MS as f64) as EpochMillis;
    let m0 = minute_of(t0);
    let eligible: Vec<(&Instrument, f64)> = products
        .iter()
        .filter(|i| i.kind != InstrumentKind::Index && i.expiry_ms().is_some_and(|e| e >= alive_until))
        .filter_map(|i| marks.contract_value_usd(i, m0).map(|v| (i, v)))
        .collect();
    let k = spec.holdings.min(eligible.len());
    if k == 0 {
        return None;
    }
    for _ in 0..1000 {
        let picks = sample(rng, eligible.len(), k);
        let mut book = Vec::with_capacity(k);
        let (mut net, mut gross) = (0.0, 0.0);
        for i in picks.iter() {
            let (inst, v) = eligible[i];
            let mut q = rng.random_range(spec.min_quantity..=spec.max_quantity);
            if rng.random::<f64>() < spec.short_probability {
                q = -q;
            }
            net += q * v;
            gross += (q * v).abs();
            book.push(Position {
                pid: pid.to_string(),
                instrument: inst.clone(),
                quantity: q,
            });
        }
        if net > spec.min_net_ratio * gross {
            return Some(book);
        }
    }
    None
}

/// One model's output at one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: Model,
    /// Return quantiles, one per configured level; empty on error.
    pub q_return: Vec<f64>,
    pub valid: bool,
    pub psd_adjusted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One line of the machine log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub timestamp: EpochMillis,
    pub pid: String,
    pub holdings: usize,
    pub portfolio_value: f64,
    pub realized_return: f64,
    pub outcomes: Vec<ModelOutcome>,
}

enum Sample {
    Used(SampleRecord),
    Dropped(EpochMillis, String),
}

fn sample_rng(seed: u64, t0: EpochMillis) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t0 as u64)
}

fn run_sample<M: QuoteHistory>(market: &M, cfg: &CampaignConfig, engine: &EngineConfig, t0: EpochMillis) -> Sample {
    let pid = format!("bt-{t0}");
    let mut rng = sample_rng(cfg.portfolio.seed, t0);
    let Some(book) = generate_portfolio(&pid, market.products(), market, t0, cfg.horizon_days, &cfg.portfolio, &mut rng)
    else {
        return Sample::Dropped(t0, "no eligible book".into());
    };
    let Some(pnl) = realized_pnl(&book, t0, cfg.horizon_days, market) else {
        return Sample::Dropped(t0, "missing marks".into());
    };
    let quotes = market.quotes_at(t0);
    let coeffs = match map_portfolio(&book, quotes.as_ref(), t0, cfg.horizon_days, engine.stale_after_ms) {
        Ok(c) => c,
        Err(e) => return Sample::Dropped(t0, e.to_string()),
    };
    let outcomes = cfg
        .cell_models()
        .into_iter()
        .map(|model| {
            let sigma = match model {
                Model::ExPost => expost_realized_covariance(&coeffs.syms, t0, cfg.horizon_days, 5, market),
                _ => forecast_covariance(model, &coeffs.syms, t0, cfg.horizon_days, market, engine).map_err(Into::into),
            };
            let result = sigma.and_then(|s| {
                let trs = cfg
                    .levels
                    .iter()
                    .map(|&l| transform(&coeffs, &s, l))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok((s.psd_adjusted, trs))
            });
            match result {
                Ok((psd_adjusted, trs)) => ModelOutcome {
                    model,
                    q_return: trs.iter().map(|t| t.q_return).collect(),
                    valid: trs.iter().all(|t| t.valid),
                    psd_adjusted,
                    error: None,
                },
                Err(e) => ModelOutcome {
                    model,
                    q_return: Vec::new(),
                    valid: false,
                    psd_adjusted: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Sample::Used(SampleRecord {
        timestamp: t0,
        pid,
        holdings: book.len(),
        portfolio_value: pnl.value_start,
        realized_return: pnl.ret,
        outcomes,
    })
}

/// Test results for one (model, level) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: Model,
    pub confidence: f64,
    pub n: usize,
    pub violations: usize,
    pub expected: f64,
    pub hit_rate: f64,
    pub coverage_p_value: f64,
    pub coverage_pass: bool,
    pub group_sizes: Vec<usize>,
    /// Per group; `None` where the group is too small for the test.
    pub lr: Vec<Option<LrReport>>,
    pub lr_average: Option<f64>,
    pub lr_average_p_value: Option<f64>,
    pub lr_pass: bool,
    pub f: Vec<Option<FTestReport>>,
    pub f_average: Option<f64>,
    pub f_average_p_value: Option<f64>,
    pub f_pass: bool,
}

impl CellReport {
    pub fn passes(&self) -> usize {
        [self.coverage_pass, self.lr_pass, self.f_pass].iter().filter(|&&p| p).count()
    }
}

/// Coverage over the whole series; LR and F per hour-of-day group, with
/// decisions taken on the sample-weighted group averages. Comparing an
/// averaged statistic with single-test critical values is a heuristic.
pub fn evaluate_cell(
    model: Model,
    series: &ViolationSeries,
    groups: usize,
    lags: usize,
    coverage_significance: f64,
    independence_significance: f64,
) -> Result<CellReport> {
    if series.is_empty() {
        return Err(BacktestError::Empty);
    }
    let n = series.len();
    let violations = series.violations();
    let coverage_p_value = binomial_coverage(n as u64, 1.0 - series.confidence, violations as u64)?;
    let parts = split_groups(series, groups)?;
    let group_sizes: Vec<usize> = parts.iter().map(|g| g.len()).collect();
    let lr: Vec<Option<LrReport>> = parts
        .iter()
        .map(|g| christoffersen_lr(&g.indicators, independence_significance).ok())
        .collect();
    let f: Vec<Option<FTestReport>> = parts
        .iter()
        .map(|g| regression_independence_f(&g.indicators, lags, independence_significance).ok())
        .collect();

    // A group without violations has LR = 0 under the 0 ln 0 convention and
    // keeps its weight; an undefined F is left out.
    let lr_cells: Vec<(Option<f64>, usize)> = lr
        .iter()
        .zip(&group_sizes)
        .map(|(r, &w)| (r.as_ref().and_then(|r| r.lr), w))
        .collect();
    let lr_average = weighted_average(&lr_cells, MissingCell::Zero);
    let lr_average_p_value = lr_average.map(|v| chi_squared_sf(v, 1.0));
    let lr_pass = lr_average.is_none_or(|v| v <= chi2_1_critical(independence_significance));

    let f_cells: Vec<(Option<f64>, usize)> =
        f.iter().zip(&group_sizes).map(|(r, &w)| (r.as_ref().and_then(|r| r.f), w)).collect();
    let f_average = weighted_average(&f_cells, MissingCell::Skip);
    let df2 = weighted_average(
        &f.iter()
            .zip(&group_sizes)
            .map(|(r, &w)| (r.as_ref().filter(|r| r.f.is_some()).map(|r| r.df2 as f64), w))
            .collect::<Vec<_>>(),
        MissingCell::Skip,
    );
    let f_average_p_value = f_average.zip(df2).map(|(v, d)| averaged_f_p_value(v, lags, d));
    let f_pass = f_average_p_value.is_none_or(|p| !(p < independence_significance));

    Ok(CellReport {
        model,
        confidence: series.confidence,
        n,
        violations,
        expected: series.expected_violations(),
        hit_rate: violations as f64 / n as f64,
        coverage_p_value,
        coverage_pass: coverage_p_value >= coverage_significance,
        group_sizes,
        lr,
        lr_average,
        lr_average_p_value,
        lr_pass,
        f,
        f_average,
        f_average_p_value,
        f_pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: Model,
    /// Per configured level.
    pub hit_rates: Vec<f64>,
    pub passes: usize,
    pub tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub levels: Vec<f64>,
    pub horizon_days: f64,
    pub groups: usize,
    pub grid_points: usize,
    pub samples: usize,
    pub dropped: Vec<(EpochMillis, String)>,
    /// Inference or transformation failures per model.
    pub failures: BTreeMap<String, usize>,
    pub cells: Vec<CellReport>,
    pub summaries: Vec<ModelSummary>,
    pub records: Vec<SampleRecord>,
}

/// Violation series of `model` at level index `li`, over the samples where
/// the model produced a quantile.
pub fn violation_series(records: &[SampleRecord], model: Model, confidence: f64, li: usize) -> Result<ViolationSeries> {
    let (mut ts, mut q, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for rec in records {
        if let Some(o) = rec.outcomes.iter().find(|o| o.model == model) {
            if let Some(&v) = o.q_return.get(li) {
                ts.push(rec.timestamp);
                q.push(v);
                r.push(rec.realized_return);
            }
        }
    }
    ViolationSeries::new(confidence, ts, q, r)
}

pub fn run_backtest_campaign<M: QuoteHistory>(
    market: &M,
    cfg: &CampaignConfig,
    engine: &EngineConfig,
) -> Result<CampaignReport> {
    cfg.validate()?;
    let times = cfg.grid.times()?;
    let samples = engine.exec.map(&times, |&t| run_sample(market, cfg, engine, t));
    let mut records = Vec::new();
    let mut dropped = Vec::new();
    for s in samples {
        match s {
            Sample::Used(r) => records.push(r),
            Sample::Dropped(t, why) => dropped.push((t, why)),
        }
    }
    if records.is_empty() {
        return Err(BacktestError::Empty);
    }
    let mut failures = BTreeMap::new();
    for o in records.iter().flat_map(|r| &r.outcomes) {
        if o.error.is_some() {
            *failures.entry(o.model.to_string()).or_insert(0) += 1;
        }
    }

    let models = cfg.cell_models();
    let keys: Vec<(Model, usize)> = models
        .iter()
        .flat_map(|&m| (0..cfg.levels.len()).map(move |li| (m, li)))
        .collect();
    let cells = engine.exec.map(&keys, |&(m, li)| {
        let series = violation_series(&records, m, cfg.levels[li], li)?;
        evaluate_cell(m, &series, cfg.groups, cfg.lags, cfg.coverage_significance, cfg.independence_significance)
    });
    let cells: Vec<CellReport> = cells.into_iter().filter_map(|c| c.ok()).collect();
    let summaries = models
        .iter()
        .map(|&m| {
            let mine: Vec<&CellReport> = cells.iter().filter(|c| c.model == m).collect();
            ModelSummary {
                model: m,
                hit_rates: mine.iter().map(|c| c.hit_rate).collect(),
                passes: mine.iter().map(|c| c.passes()).sum(),
                tests: 3 * mine.len(),
            }
        })
        .collect();
    Ok(CampaignReport {
        levels: cfg.levels.clone(),
        horizon_days: cfg.horizon_days,
        groups: cfg.groups,
        grid_points: times.len(),
        samples: records.len(),
        dropped,
        failures,
        cells,
        summaries,
        records,
    })
}

/// Generates the configured synthetic market and runs the campaign on it.
pub fn run_synthetic_campaign(cfg: &CampaignConfig, engine: &EngineConfig) -> Result<CampaignReport> {
    let market = SyntheticMarket::generate(cfg.market.clone());
    run_backtest_campaign(&market, cfg, engine)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.6}"))
}

fn decision(pass: bool) -> &'static str {
    if pass {
        "accept"
    } else {
        "reject"
    }
}

fn io_err(e: impl std::fmt::Display) -> BacktestError {
    BacktestError::Io(e.to_string())
}

impl CampaignReport {
    /// Writes coverage, independence, F-test and summary tables as CSV,
    /// the per-sample log as JSON lines and a rendered text version.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err)?;

        let mut w = csv::Writer::from_path(dir.join("coverage.csv")).map_err(io_err)?;
        w.write_record(["model", "confidence", "n", "expected", "violations", "hit_rate", "p_value", "result"])
            .map_err(io_err)?;
        for c in &self.cells {
            w.write_record([
                c.model.to_string(),
                c.confidence.to_string(),
                c.n.to_string(),
                format!("{:.2}", c.expected),
                c.violations.to_string(),
                format!("{:.6}", c.hit_rate),
                format!("{:.6}", c.coverage_p_value),
                decision(c.coverage_pass).to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;

        let mut w = csv::Writer::from_path(dir.join("independence_lr.csv")).map_err(io_err)?;
        w.write_record(["model", "confidence", "group", "n", "n00", "n01", "n10", "n11", "lr", "p_value", "result"])
            .map_err(io_err)?;
        for c in &self.cells {
            for (g, r) in c.lr.iter().enumerate() {
                let counts = r
                    .as_ref()
                    .map_or([String::new(), String::new(), String::new(), String::new()], |r| {
                        [r.n00.to_string(), r.n01.to_string(), r.n10.to_string(), r.n11.to_string()]
                    });
                let (lr, p, res) = match r {
                    Some(r) => (opt(r.lr), opt(r.p_value), r.reject.map_or("N/A", |x| decision(!x))),
                    None => ("N/A".into(), "N/A".into(), "N/A"),
                };
                let mut row = vec![c.model.to_string(), c.confidence.to_string(), g.to_string(), c.group_sizes[g].to_string()];
                row.extend(counts);
                row.extend([lr, p, res.to_string()]);
                w.write_record(&row).map_err(io_err)?;
            }
            let mut row = vec![c.model.to_string(), c.confidence.to_string(), "average".into(), c.n.to_string()];
            row.extend([String::new(), String::new(), String::new(), String::new()]);
            row.extend([opt(c.lr_average), opt(c.lr_average_p_value), decision(c.lr_pass).to_string()]);
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;

        let mut w = csv::Writer::from_path(dir.join("independence_f.csv")).map_err(io_err)?;
        w.write_record(["model", "confidence", "group", "n", "k", "df2", "f", "p_value", "result"])
            .map_err(io_err)?;
        for c in &self.cells {
            for (g, r) in c.f.iter().enumerate() {
                let row = match r {
                    Some(r) => [
                        r.n.to_string(),
                        r.k.to_string(),
                        r.df2.to_string(),
                        opt(r.f),
                        opt(r.p_value),
                        r.reject.map_or("N/A", |x| decision(!x)).to_string(),
                    ],
                    None => [c.group_sizes[g].to_string(), String::new(), String::new(), "N/A".into(), "N/A".into(), "N/A".into()],
                };
                let mut full = vec![c.model.to_string(), c.confidence.to_string(), g.to_string()];
                full.extend(row);
                w.write_record(&full).map_err(io_err)?;
            }
            w.write_record([
                c.model.to_string(),
                c.confidence.to_string(),
                "average".into(),
                c.n.to_string(),
                String::new(),
                String::new(),
                opt(c.f_average),
                opt(c.f_average_p_value),
                decision(c.f_pass).to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;

        let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(io_err)?;
        let mut header = vec!["model".to_string()];
        header.extend(self.levels.iter().map(|l| format!("hit_rate_{l}")));
        header.extend(["passes".to_string(), "tests".to_string()]);
        w.write_record(&header).map_err(io_err)?;
        for s in &self.summaries {
            let mut row = vec![s.model.to_string()];
            row.extend(s.hit_rates.iter().map(|h| format!("{h:.6}")));
            row.extend([s.passes.to_string(), s.tests.to_string()]);
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;

        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("samples.jsonl")).map_err(io_err)?);
        for r in &self.records {
            serde_json::to_writer(&mut f, r).map_err(io_err)?;
            f.write_all(b"\n").map_err(io_err)?;
        }
        f.flush().map_err(io_err)?;

        std::fs::write(dir.join("tables.txt"), self.render()).map_err(io_err)
    }

    fn cell(&self, model: Model, confidence: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.model == model && c.confidence == confidence)
    }

    fn models(&self) -> Vec<Model> {
        self.summaries.iter().map(|s| s.model).collect()
    }

    /// Plain-text tables for a terminal.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let models = self.models();
        let _ = writeln!(
            out,
            "Backtest: {} samples of {} grid points, horizon {} d, {} groups",
            self.samples, self.grid_points, self.horizon_days, self.groups
        );
        for (m, n) in &self.failures {
            let _ = writeln!(out, "  {m}: {n} samples without a forecast");
        }

        let _ = writeln!(out, "\nCoverage: violations (upper-tail binomial p-value)");
        let _ = write!(out, "{:>8} {:>6} {:>9}", "level", "n", "expected");
        for m in &models {
            let _ = write!(out, " {:>16}", m.to_string());
        }
        out.push('\n');
        for &l in &self.levels {
            let first = models.iter().find_map(|&m| self.cell(m, l));
            let (n, e) = first.map_or((0, 0.0), |c| (c.n, c.expected));
            let _ = write!(out, "{:>7.1}% {:>6} {:>9.1}", l * 100.0, n, e);
            for &m in &models {
                let s = self.cell(m, l).map_or("-".into(), |c| format!("{} ({:.3})", c.violations, c.coverage_p_value));
                let _ = write!(out, " {s:>16}");
            }
            out.push('\n');
        }

        for (title, lr) in [("Independence LR by group", true), ("Regression F by group", false)] {
            let _ = writeln!(out, "\n{title} (average weighted by group size)");
            let _ = write!(out, "{:>8} {:>7}", "level", "model");
            for g in 0..self.groups {
                let _ = write!(out, " {:>8}", format!("g{g}"));
            }
            let _ = writeln!(out, " {:>8} {:>7}", "average", "result");
            for &l in &self.levels {
                for &m in &models {
                    let Some(c) = self.cell(m, l) else { continue };
                    let _ = write!(out, "{:>7.1}% {:>7}", l * 100.0, m.to_string());
                    for g in 0..self.groups {
                        let v = if lr {
                            c.lr[g].as_ref().and_then(|r| r.lr)
                        } else {
                            c.f[g].as_ref().and_then(|r| r.f)
                        };
                        let _ = write!(out, " {:>8}", v.map_or("N/A".into(), |x| format!("{x:.2}")));
                    }
                    let (avg, pass) = if lr { (c.lr_average, c.lr_pass) } else { (c.f_average, c.f_pass) };
                    let _ = writeln!(
                        out,
                        " {:>8} {:>7}",
                        avg.map_or("N/A".into(), |x| format!("{x:.2}")),
                        decision(pass)
                    );
                }
            }
        }
        let _ = writeln!(
            out,
            "Decisions on averaged statistics use single-test critical values (heuristic)."
        );

        let _ = writeln!(out, "\nHit rates and passes");
        let _ = write!(out, "{:>7}", "model");
        for &l in &self.levels {
            let _ = write!(out, " {:>8}", format!("{:.1}%", l * 100.0));
        }
        let _ = writeln!(out, " {:>7}", "passes");
        for s in &self.summaries {
            let _ = write!(out, "{:>7}", s.model.to_string());
            for h in &s.hit_rates {
                let _ = write!(out, " {:>7.2}%", h * 100.0);
            }
            let _ = writeln!(out, " {:>7}", format!("{}/{}", s.passes, s.tests));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal_quantile;
    use crate::HOUR_MS;
    use rand_distr::{Distribution, StandardNormal};

    fn hourly_ts(n: usize) -> Vec<EpochMillis> {
        (0..n as i64).map(|h| 1_690_243_200_000 + h * HOUR_MS).collect()
    }

    fn gaussian_series(n: usize, confidence: f64, scale_var: f64, rng: &mut ChaCha8Rng) -> ViolationSeries {
        let sd: Vec<f64> = (0..n).map(|i| 0.01 * (1.0 + 0.5 * ((i as f64) / 40.0).sin())).collect();
        let realized: Vec<f64> = sd.iter().map(|s| s * Distribution::<f64>::sample(&StandardNormal, rng)).collect();
        let q: Vec<f64> = sd.iter().map(|s| scale_var * s * normal_quantile(1.0 - confidence)).collect();
        ViolationSeries::new(confidence, hourly_ts(n), q, realized).unwrap()
    }

    #[test]
    fn true_quantiles_pass_at_calibrated_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 300;
        for level in [0.95, 0.975, 0.99] {
            let (mut cov, mut lr, mut f) = (0, 0, 0);
            for _ in 0..trials {
                let s = gaussian_series(456, level, 1.0, &mut rng);
                let c = evaluate_cell(Model::Har, &s, 6, 4, 0.01, 0.05).unwrap();
                cov += c.coverage_pass as usize;
                lr += c.lr_pass as usize;
                f += c.f_pass as usize;
            }
            let rate = |x: usize| x as f64 / trials as f64;
            // One-sided 1% coverage test: nominal acceptance 0.99.
            assert!(rate(cov) >= 0.97, "{level}: coverage {}", rate(cov));
            assert!(rate(lr) >= 0.9, "{level}: lr {}", rate(lr));
            assert!(rate(f) >= 0.9, "{level}: f {}", rate(f));
        }
    }

    #[test]
    fn halved_var_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for level in [0.95, 0.975, 0.99] {
            let s = gaussian_series(456, level, 0.5, &mut rng);
            let c = evaluate_cell(Model::Har, &s, 6, 4, 0.01, 0.05).unwrap();
            assert!(!c.coverage_pass, "{level}: {} violations", c.violations);
        }
    }

    #[test]
    fn empty_series_is_an_error() {
        let s = ViolationSeries::new(0.95, vec![], vec![], vec![]).unwrap();
        assert_eq!(evaluate_cell(Model::Har, &s, 6, 4, 0.01, 0.05), Err(BacktestError::Empty));
    }

    #[test]
    fn group_counts_sum_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = gaussian_series(413, 0.95, 1.0, &mut rng);
        let c = evaluate_cell(Model::Ewma, &s, 6, 4, 0.01, 0.05).unwrap();
        assert_eq!(c.group_sizes.iter().sum::<usize>(), c.n);
        assert_eq!(c.lr.len(), 6);
        assert!(c.passes() <= 3);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let text = r#"
            models = ["EWMA", "HAR"]
            levels = [0.95, 0.99]
            horizon_days = 0.5
            include_expost = false
            [grid]
            start = "2024-01-12T00:00:00Z"
            end = "2024-01-13T00:00:00Z"
            stride_minutes = 120
            [portfolio]
            seed = 3
            holdings = 4
            [market]
            days = 14
            seed = 2
        "#;
        let cfg = CampaignConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.models, vec![Model::Ewma, Model::Har]);
        assert_eq!(cfg.grid.times().unwrap().len(), 12);
        assert_eq!(cfg.market.days, 14);
        assert_eq!(cfg.market.spots.len(), 2);
        assert_eq!(cfg.groups, 6);
        let back = CampaignConfig::from_toml_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(CampaignConfig::from_toml_str("levels = [1.5]").is_err());
        assert!(CampaignConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn books_are_long_biased_and_alive() {
        let m = SyntheticMarket::generate(SimConfig {
            days: 3,
            ..SimConfig::default()
        });
        let spec = PortfolioSpec::default();
        let t0 = m.start() + DAY_MS;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let book = generate_portfolio("p", m.products(), &m, t0, 1.0, &spec, &mut rng).unwrap();
            assert_eq!(book.len(), 10);
            let vals: Vec<f64> = book
                .iter()
                .map(|p| p.quantity * m.contract_value_usd(&p.instrument, t0).unwrap())
                .collect();
            let net: f64 = vals.iter().sum();
            let gross: f64 = vals.iter().map(|v| v.abs()).sum();
            assert!(net > 0.3 * gross);
            for p in &book {
                assert!(p.quantity.abs() >= 0.5 && p.quantity.abs() <= 3.0);
                assert!(p.instrument.expiry_ms().unwrap() >= t0 + 2 * DAY_MS);
            }
        }
    }

    #[test]
    fn small_campaign_end_to_end() {
        let cfg = CampaignConfig {
            models: vec![Model::Ewma, Model::Har],
            levels: vec![0.95, 0.99],
            horizon_days: 1.0 / 24.0,
            grid: GridSpec {
                start: "2024-01-12T00:00:00Z".into(),
                end: "2024-01-13T00:00:00Z".into(),
                stride_minutes: 60,
            },
            market: SimConfig {
                days: 13,
                ..SimConfig::default()
            },
            ..CampaignConfig::default()
        };
        let report = run_synthetic_campaign(&cfg, &EngineConfig::default()).unwrap();
        assert_eq!(report.grid_points, 24);
        assert_eq!(report.samples + report.dropped.len(), 24);
        assert_eq!(report.cells.len(), 3 * 2);
        assert_eq!(report.summaries.len(), 3);
        assert!(report.summaries.iter().all(|s| s.tests == 6 && s.passes <= 6));
        for c in &report.cells {
            assert_eq!(c.group_sizes.iter().sum::<usize>(), c.n);
        }
        let dir = std::env::temp_dir().join(format!("cryptovar-campaign-{}", std::process::id()));
        report.write_outputs(&dir).unwrap();
        for f in ["coverage.csv", "independence_lr.csv", "independence_f.csv", "summary.csv", "samples.jsonl", "tables.txt"] {
            assert!(dir.join(f).exists(), "{f}");
        }
        let lines = std::fs::read_to_string(dir.join("samples.jsonl")).unwrap();
        assert_eq!(lines.lines().count(), report.samples);
        let first: SampleRecord = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(first, report.records[0]);
        let cov = std::fs::read_to_string(dir.join("coverage.csv")).unwrap();
        assert_eq!(cov.lines().count(), 1 + 6);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
