//! Rate-versus-SNR sweeps and their CSV/JSON serialization.
//!
//! A sweep draws one search batch (stream 0) and, when JSC is requested, one
//! validation batch (stream 1) at the configured shape, and reuses them at
//! every SNR and for every scheme.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, GbcConfig};
use crate::error::{Error, Result};
use crate::gbc::{mat2_rate, qmat_rate, tdma_rate, upper_bound, BetaVector, RatePoint, Scheme};
use crate::montecarlo::{
    McPlan, SampleBatch, DEFAULT_MEMORY_BUDGET, SEARCH_STREAM, VALIDATION_STREAM,
};
use crate::optimizer::{optimize_beta_on, rate_at_fixed_beta_on, BetaGrid, OptResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: [&str; 8] = [
    "snr_db",
    "scheme",
    "rate_bits",
    "stderr",
    "samples",
    "seed",
    "beta_json",
    "alpha_json",
];

pub const PRESETS: [&str; 4] = ["fig2a", "fig2b", "fig3a", "fig3b"];

/// How an SNR axis value in dB maps to `snr = P / (n_t sigma^2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrAxis {
    /// The axis value is `snr` itself.
    #[default]
    PerAntenna,
    /// The axis value is the total transmit SNR `P / sigma^2 = n_t snr`.
    Total,
}

impl SnrAxis {
    pub fn tag(self) -> &'static str {
        match self {
            SnrAxis::PerAntenna => "per-antenna",
            SnrAxis::Total => "total",
        }
    }

    /// Linear `snr` for an axis value.
    pub fn snr(self, axis_db: f64, tx_antennas: usize) -> f64 {
        match self {
            SnrAxis::PerAntenna => db_to_linear(axis_db),
            SnrAxis::Total => db_to_linear(axis_db) / tx_antennas as f64,
        }
    }
}

impl std::str::FromStr for SnrAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-antenna" => Ok(SnrAxis::PerAntenna),
            "total" => Ok(SnrAxis::Total),
            other => Err(Error::InvalidConfig(format!(
                "unknown SNR axis {other:?}, expected per-antenna or total"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub snr_db_start: f64,
    pub snr_db_stop: f64,
    pub snr_db_step: f64,
    pub snr_axis: SnrAxis,
    pub schemes: Vec<Scheme>,
    pub users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub plan: McPlan,
    pub grid: BetaGrid,
    /// Compression noise of the fixed-beta JSC rows; defaults to the
    /// quantized-MAT equivalent.
    pub fixed_betas: Option<BetaVector>,
    pub memory_budget: usize,
}

impl SweepSpec {
    /// `K` users with `K` transmit antennas and single-antenna receivers, at
    /// -5:3:34 dB.
    pub fn miso(users: usize, schemes: Vec<Scheme>) -> Self {
        Self {
            snr_db_start: -5.0,
            snr_db_stop: 34.0,
            snr_db_step: 3.0,
            snr_axis: SnrAxis::PerAntenna,
            schemes,
            users,
            tx_antennas: users,
            rx_antennas: 1,
            plan: McPlan::default(),
            grid: BetaGrid::default(),
            fixed_betas: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    /// Figure axes at -5:3:34 dB. The two-user figures are plotted against
    /// the total transmit SNR, the three-user figures against `snr`.
    pub fn preset(name: &str) -> Result<Self> {
        use Scheme::*;
        let total = |mut spec: Self| {
            spec.snr_axis = SnrAxis::Total;
            spec
        };
        let spec = match name {
            "fig2a" => total(Self::miso(2, vec![Tdma, Jsc, Mat2, Upper])),
            "fig2b" => total(Self::miso(2, vec![Tdma, Jsc, JscFixedBeta, Qmat, Upper])),
            "fig3a" => Self::miso(3, vec![Tdma, Jsc, Upper]),
            "fig3b" => Self::miso(3, vec![Tdma, Jsc, JscFixedBeta, Qmat, Upper]),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown preset {other:?}, expected one of {PRESETS:?}"
                )))
            }
        };
        Ok(spec)
    }

    pub fn base_config(&self) -> Result<GbcConfig> {
        GbcConfig::new(self.users, self.tx_antennas, self.rx_antennas, 1.0)
    }

    pub fn fixed_betas(&self) -> BetaVector {
        self.fixed_betas
            .clone()
            .unwrap_or_else(|| BetaVector::qmat_equivalent(self.users))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.snr_db_start, self.snr_db_stop, self.snr_db_step]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.snr_db_start > self.snr_db_stop || !(self.snr_db_step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "SNR axis needs start <= stop and step > 0, got {}:{}:{}",
                self.snr_db_start, self.snr_db_step, self.snr_db_stop
            )));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("no schemes requested".into()));
        }
        let cfg = self.base_config()?;
        if let Some(s) = self.schemes.iter().find(|s| !s.supports(&cfg)) {
            return Err(Error::InvalidConfig(format!(
                "{s} is only defined for K = 2, n_t = 2, n_r = 1"
            )));
        }
        if let Some(b) = &self.fixed_betas {
            if b.len() + 1 != self.users {
                return Err(Error::Dimension(format!(
                    "{} users need {} fixed compression-noise ratios, got {}",
                    self.users,
                    self.users - 1,
                    b.len()
                )));
            }
        }
        self.plan.validated()?;
        self.grid.validated()?;
        Ok(())
    }

    /// `start + i * step` up to `stop`, inclusive.
    pub fn snr_points(&self) -> Vec<f64> {
        let span = (self.snr_db_stop - self.snr_db_start) / self.snr_db_step;
        let n = (span + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| self.snr_db_start + self.snr_db_step * i as f64)
            .collect()
    }

    pub fn metadata(&self) -> SweepMetadata {
        SweepMetadata {
            version: VERSION.to_string(),
            seed: self.plan.seed,
            samples: self.plan.samples,
            chunk: self.plan.chunk,
            users: self.users,
            tx_antennas: self.tx_antennas,
            rx_antennas: self.rx_antennas,
            snr_db_start: self.snr_db_start,
            snr_db_stop: self.snr_db_stop,
            snr_db_step: self.snr_db_step,
            snr_axis: self.snr_axis.tag().to_string(),
            schemes: self
                .schemes
                .iter()
                .map(|s| s.tag())
                .collect::<Vec<_>>()
                .join(","),
            beta_log_min: self.grid.log_min,
            beta_log_max: self.grid.log_max,
            beta_points: self.grid.points_per_dim,
            fixed_betas: json_list(self.fixed_betas().as_slice()),
            search_stream: SEARCH_STREAM,
            validation_stream: VALIDATION_STREAM,
        }
    }

    pub fn run(&self) -> Result<SweepOutput> {
        Ok(self.run_inner(false)?.0)
    }

    /// Like [`SweepSpec::run`], also returning every optimizer result with its
    /// full grid table.
    pub fn run_with_grid_dump(&self) -> Result<(SweepOutput, Vec<GridDump>)> {
        self.run_inner(true)
    }

    fn run_inner(&self, dump: bool) -> Result<(SweepOutput, Vec<GridDump>)> {
        self.validate()?;
        let base = self.base_config()?;
        let plan = self.plan.validated()?;
        let search =
            SampleBatch::cached_or_streaming(&plan, &base, SEARCH_STREAM, self.memory_budget);
        let validation = self.schemes.contains(&Scheme::Jsc).then(|| {
            SampleBatch::cached_or_streaming(&plan, &base, VALIDATION_STREAM, self.memory_budget)
        });
        let fixed = self.fixed_betas();

        let mut rows = Vec::new();
        let mut dumps = Vec::new();
        for snr_db in self.snr_points() {
            let cfg = base.with_snr(self.snr_axis.snr(snr_db, self.tx_antennas))?;
            for &scheme in &self.schemes {
                let point = match scheme {
                    Scheme::Jsc => {
                        let validation = validation.as_ref().expect("drawn when JSC is requested");
                        let res = optimize_beta_on(&cfg, &self.grid, &search, validation, dump)?;
                        let point = res.rate_point(&cfg);
                        if dump {
                            dumps.push(GridDump {
                                snr_db,
                                result: res,
                            });
                        }
                        point
                    }
                    Scheme::JscFixedBeta => rate_at_fixed_beta_on(&cfg, &fixed, &search)?,
                    Scheme::Tdma => RatePoint::baseline(&cfg, scheme, tdma_rate(&cfg, &search)?),
                    Scheme::Mat2 => RatePoint::baseline(&cfg, scheme, mat2_rate(&cfg, &search)?),
                    Scheme::Qmat => RatePoint::baseline(&cfg, scheme, qmat_rate(&cfg, &search)?),
                    Scheme::Upper => RatePoint::baseline(&cfg, scheme, upper_bound(&cfg, &search)?),
                };
                rows.push(SweepRow::from_point(snr_db, &point));
            }
        }
        Ok((
            SweepOutput {
                metadata: self.metadata(),
                rows,
            },
            dumps,
        ))
    }
}

/// Optimizer output at one SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDump {
    pub snr_db: f64,
    pub result: OptResult,
}

fn json_list(values: &[f64]) -> String {
    serde_json::to_string(values).expect("finite floats serialize")
}

/// Everything needed to regenerate a sweep bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub version: String,
    pub seed: u64,
    pub samples: usize,
    pub chunk: usize,
    pub users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub snr_db_start: f64,
    pub snr_db_stop: f64,
    pub snr_db_step: f64,
    pub snr_axis: String,
    pub schemes: String,
    pub beta_log_min: f64,
    pub beta_log_max: f64,
    pub beta_points: usize,
    pub fixed_betas: String,
    pub search_stream: u64,
    pub validation_stream: u64,
}

impl SweepMetadata {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("version", self.version.clone()),
            ("seed", self.seed.to_string()),
            ("samples", self.samples.to_string()),
            ("chunk", self.chunk.to_string()),
            ("users", self.users.to_string()),
            ("tx_antennas", self.tx_antennas.to_string()),
            ("rx_antennas", self.rx_antennas.to_string()),
            ("snr_db_start", self.snr_db_start.to_string()),
            ("snr_db_stop", self.snr_db_stop.to_string()),
            ("snr_db_step", self.snr_db_step.to_string()),
            ("snr_axis", self.snr_axis.clone()),
            ("schemes", self.schemes.clone()),
            ("beta_log_min", self.beta_log_min.to_string()),
            ("beta_log_max", self.beta_log_max.to_string()),
            ("beta_points", self.beta_points.to_string()),
            ("fixed_betas", self.fixed_betas.clone()),
            ("search_stream", self.search_stream.to_string()),
            ("validation_stream", self.validation_stream.to_string()),
        ]
    }

    fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::InvalidConfig(format!("metadata line `{key}` is missing")))
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| {
                Error::InvalidConfig(format!("metadata `{key}` has invalid value {v:?}"))
            })
        }
        Ok(Self {
            version: get("version")?.to_string(),
            seed: num("seed", get("seed")?)?,
            samples: num("samples", get("samples")?)?,
            chunk: num("chunk", get("chunk")?)?,
            users: num("users", get("users")?)?,
            tx_antennas: num("tx_antennas", get("tx_antennas")?)?,
            rx_antennas: num("rx_antennas", get("rx_antennas")?)?,
            snr_db_start: num("snr_db_start", get("snr_db_start")?)?,
            snr_db_stop: num("snr_db_stop", get("snr_db_stop")?)?,
            snr_db_step: num("snr_db_step", get("snr_db_step")?)?,
            snr_axis: get("snr_axis")?.to_string(),
            schemes: get("schemes")?.to_string(),
            beta_log_min: num("beta_log_min", get("beta_log_min")?)?,
            beta_log_max: num("beta_log_max", get("beta_log_max")?)?,
            beta_points: num("beta_points", get("beta_points")?)?,
            fixed_betas: get("fixed_betas")?.to_string(),
            search_stream: num("search_stream", get("search_stream")?)?,
            validation_stream: num("validation_stream", get("validation_stream")?)?,
        })
    }
}

/// One CSV row; `beta_json` and `alpha_json` are empty for baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub rate_bits: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
    pub beta_json: String,
    pub alpha_json: String,
}

impl SweepRow {
    /// `snr_db` is the axis value, which differs from `p.snr_db` on a total-SNR axis.
    pub fn from_point(snr_db: f64, p: &RatePoint) -> Self {
        Self {
            snr_db,
            scheme: p.scheme,
            rate_bits: p.rate.mean,
            stderr: p.rate.stderr,
            samples: p.rate.samples,
            seed: p.rate.seed,
            beta_json: p
                .betas
                .as_ref()
                .map(|b| json_list(b.as_slice()))
                .unwrap_or_default(),
            alpha_json: p
                .alphas
                .as_ref()
                .map(|a| json_list(a.as_slice()))
                .unwrap_or_default(),
        }
    }

    fn fields(&self) -> [String; 8] {
        [
            self.snr_db.to_string(),
            self.scheme.tag().to_string(),
            self.rate_bits.to_string(),
            self.stderr.to_string(),
            self.samples.to_string(),
            self.seed.to_string(),
            self.beta_json.clone(),
            self.alpha_json.clone(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        let bad = |what: &str| Error::InvalidConfig(format!("row {line}: invalid {what}"));
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::InvalidConfig(format!(
                "row {line}: expected {} fields, got {}",
                CSV_HEADER.len(),
                rec.len()
            )));
        }
        Ok(Self {
            snr_db: rec[0].parse().map_err(|_| bad("snr_db"))?,
            scheme: rec[1].parse()?,
            rate_bits: rec[2].parse().map_err(|_| bad("rate_bits"))?,
            stderr: rec[3].parse().map_err(|_| bad("stderr"))?,
            samples: rec[4].parse().map_err(|_| bad("samples"))?,
            seed: rec[5].parse().map_err(|_| bad("seed"))?,
            beta_json: rec[6].to_string(),
            alpha_json: rec[7].to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub metadata: SweepMetadata,
    pub rows: Vec<SweepRow>,
}

impl SweepOutput {
    /// `# key=value` metadata lines, then the header and one row per
    /// `(snr, scheme)`.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in self.metadata.pairs() {
            writeln!(out, "# {k}={v}").expect("writing to a String");
        }
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidConfig(format!("CSV encoding failed: {e}"));
        w.write_record(CSV_HEADER).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.fields()).map_err(io)?;
        }
        let body = w
            .into_inner()
            .map_err(|e| Error::InvalidConfig(format!("CSV encoding failed: {e}")))?;
        out.push_str(std::str::from_utf8(&body).expect("CSV of UTF-8 fields"));
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(meta) = line.strip_prefix("# ") else {
                break;
            };
            let (k, v) = meta
                .trim_end_matches('\n')
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("malformed metadata line {line:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
            body_start += line.len();
        }
        let metadata = SweepMetadata::from_pairs(&pairs)?;
        let mut r = csv::ReaderBuilder::new().from_reader(&text.as_bytes()[body_start..]);
        let header = r
            .headers()
            .map_err(|e| Error::InvalidConfig(format!("CSV header: {e}")))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::InvalidConfig(format!(
                "CSV header must be {}",
                CSV_HEADER.join(",")
            )));
        }
        let rows = r
            .records()
            .enumerate()
            .map(|(i, rec)| {
                let rec = rec.map_err(|e| Error::InvalidConfig(format!("row {}: {e}", i + 1)))?;
                SweepRow::from_record(&rec, i + 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { metadata, rows })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep output serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("sweep JSON: {e}")))
    }

    pub fn rows_for(&self, scheme: Scheme) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }
}
