//! Run configuration text, ledger and report CSV, binary checkpoints.
//!
//! Config files are flat `key = value` lines with `#` comments. Ledger CSV
//! prints every value with 17 significant digits, so reading back yields
//! the same bits. Checkpoints are `ENSLAB01`, then version, n, L, t and
//! scheme as little-endian 64-bit words, then ρ, w₀..w₂, u₀..u₂ as
//! little-endian f64 in x-fastest order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{DensityLongtime, InequalityStats, MonitorReport, StabilityReport};
use crate::functionals::{EnergyLedger, LedgerRow, LEDGER_COLUMNS};
use crate::spectral::{Field, Grid};
use crate::state::{FluidState, Generator, InitialData, RunConfig, Scheme};

/// Every accepted config key, in emission order.
pub const CONFIG_KEYS: [&str; 26] = [
    "n",
    "box_len",
    "dt",
    "t_end",
    "scheme",
    "order",
    "integrating_factor",
    "cfl",
    "rho_floor",
    "cadence",
    "checkpoint_every",
    "init.generator",
    "init.amplitude",
    "init.sigma",
    "init.seed",
    "init.rho_background",
    "init.u_amplitude",
    "init.w_amplitude",
    "init.mode",
    "init.band",
    "init.w_mean",
    "init.u_mean",
    "monitor.besov",
    "monitor.higher_order",
    "monitor.a0",
    "monitor.beta",
];

const REQUIRED_KEYS: [&str; 4] = ["n", "dt", "t_end", "init.generator"];

fn config_error(line: usize, key: Option<&str>, message: impl Into<String>) -> Error {
    let message = message.into();
    Error::Config {
        line,
        key: key.map(str::to_owned),
        message: match key {
            Some(k) => format!("key '{k}': {message}"),
            None => message,
        },
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| config_error(line, Some(key), format!("cannot parse '{raw}': {e}")))
}

fn parse_triple(line: usize, key: &str, raw: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(config_error(line, Some(key), format!("expected three comma-separated numbers, got '{raw}'")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_value(line, key, p)?;
    }
    Ok(out)
}

/// Parses a run configuration; omitted optional keys take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_error(line_no, None, format!("expected 'key = value', got '{content}'")))?;
        let key = key.trim();
        let value = value.trim();
        let Some(&known) = CONFIG_KEYS.iter().find(|k| **k == key) else {
            return Err(config_error(line_no, Some(key), "unknown key"));
        };
        if let Some((first, _)) = entries.insert(known, (line_no, value)) {
            return Err(config_error(line_no, Some(key), format!("duplicate key (first on line {first})")));
        }
    }
    for key in REQUIRED_KEYS {
        if !entries.contains_key(key) {
            return Err(config_error(0, Some(key), "missing required key"));
        }
    }
    let get = |k: &str| entries.get(k).copied();
    let (ln, v) = get("init.generator").expect("required");
    let generator: Generator = parse_value(ln, "init.generator", v)?;
    let (ln, v) = get("n").expect("required");
    let n: usize = parse_value(ln, "n", v)?;
    let (ln, v) = get("dt").expect("required");
    let dt: f64 = parse_value(ln, "dt", v)?;
    let (ln, v) = get("t_end").expect("required");
    let t_end: f64 = parse_value(ln, "t_end", v)?;
    let mut c = RunConfig::new(n, dt, t_end, InitialData::new(generator));

    for (&key, &(ln, v)) in &entries {
        match key {
            "box_len" => c.box_len = parse_value(ln, key, v)?,
            "scheme" => c.scheme = parse_value::<Scheme>(ln, key, v)?,
            "order" => c.order = parse_value(ln, key, v)?,
            "integrating_factor" => c.integrating_factor = parse_value(ln, key, v)?,
            "cfl" => c.cfl = parse_value(ln, key, v)?,
            "rho_floor" => c.rho_floor = parse_value(ln, key, v)?,
            "cadence" => c.cadence = parse_value(ln, key, v)?,
            "checkpoint_every" => c.checkpoint_every = parse_value(ln, key, v)?,
            "init.amplitude" => c.init.amplitude = parse_value(ln, key, v)?,
            "init.sigma" => c.init.sigma = parse_value(ln, key, v)?,
            "init.seed" => c.init.seed = parse_value(ln, key, v)?,
            "init.rho_background" => c.init.rho_background = parse_value(ln, key, v)?,
            "init.u_amplitude" => c.init.u_amplitude = parse_value(ln, key, v)?,
            "init.w_amplitude" => c.init.w_amplitude = parse_value(ln, key, v)?,
            "init.mode" => c.init.mode = parse_value(ln, key, v)?,
            "init.band" => c.init.band = parse_value(ln, key, v)?,
            "init.w_mean" => c.init.w_mean = parse_triple(ln, key, v)?,
            "init.u_mean" => c.init.u_mean = parse_triple(ln, key, v)?,
            "monitor.besov" => c.monitor.besov = parse_value(ln, key, v)?,
            "monitor.higher_order" => c.monitor.higher_order = parse_value(ln, key, v)?,
            "monitor.a0" => c.monitor.a0 = parse_value(ln, key, v)?,
            "monitor.beta" => c.monitor.beta = parse_value(ln, key, v)?,
            _ => {}
        }
    }
    c.validate().map_err(|e| match e {
        Error::Config { key: Some(k), message, .. } => {
            let line = entries.get(k.as_str()).map(|e| e.0).unwrap_or(0);
            config_error(line, Some(&k), message)
        }
        other => other,
    })?;
    Ok(c)
}

/// Text form of a configuration with every key present; parses back to an
/// identical value.
pub fn emit_config(c: &RunConfig) -> String {
    let triple = |v: [f64; 3]| format!("{:?}, {:?}, {:?}", v[0], v[1], v[2]);
    let values: [String; 26] = [
        c.n.to_string(),
        format!("{:?}", c.box_len),
        format!("{:?}", c.dt),
        format!("{:?}", c.t_end),
        c.scheme.to_string(),
        c.order.to_string(),
        c.integrating_factor.to_string(),
        format!("{:?}", c.cfl),
        format!("{:?}", c.rho_floor),
        c.cadence.to_string(),
        c.checkpoint_every.to_string(),
        c.init.generator.to_string(),
        format!("{:?}", c.init.amplitude),
        format!("{:?}", c.init.sigma),
        c.init.seed.to_string(),
        format!("{:?}", c.init.rho_background),
        format!("{:?}", c.init.u_amplitude),
        format!("{:?}", c.init.w_amplitude),
        c.init.mode.to_string(),
        c.init.band.to_string(),
        triple(c.init.w_mean),
        triple(c.init.u_mean),
        c.monitor.besov.to_string(),
        c.monitor.higher_order.to_string(),
        format!("{:?}", c.monitor.a0),
        format!("{:?}", c.monitor.beta),
    ];
    let mut out = String::new();
    for (k, v) in CONFIG_KEYS.iter().zip(values) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// 17 significant digits.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt17).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn ledger_to_csv(ledger: &EnergyLedger) -> String {
    csv_table(&LEDGER_COLUMNS, ledger.rows().iter().map(|r| r.values().to_vec()))
}

/// Inverse of [`ledger_to_csv`]; the header must match the column list exactly.
pub fn parse_ledger(text: &str) -> Result<EnergyLedger> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.trim_end_matches('\r'))
        .ok_or_else(|| Error::Ledger("empty file".into()))?;
    let expected = LEDGER_COLUMNS.join(",");
    if header != expected {
        return Err(Error::Ledger(format!("header mismatch: expected '{expected}'")));
    }
    let mut ledger = EnergyLedger::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut values = [0.0; 23];
        let mut count = 0;
        for cell in line.split(',') {
            if count == values.len() {
                return Err(Error::Ledger(format!("line {}: too many fields", i + 1)));
            }
            values[count] = cell
                .trim()
                .parse()
                .map_err(|e| Error::Ledger(format!("line {}: field {}: {e}", i + 1, LEDGER_COLUMNS[count])))?;
            count += 1;
        }
        if count != values.len() {
            return Err(Error::Ledger(format!("line {}: {count} fields, expected {}", i + 1, values.len())));
        }
        ledger
            .push(LedgerRow::from_values(&values))
            .map_err(|e| Error::Ledger(format!("line {}: {e}", i + 1)))?;
    }
    Ok(ledger)
}

pub fn write_ledger(ledger: &EnergyLedger, path: &Path) -> Result<()> {
    fs::write(path, ledger_to_csv(ledger))?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<EnergyLedger> {
    parse_ledger(&fs::read_to_string(path)?)
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ENSLAB01";
pub const CHECKPOINT_VERSION: u64 = 1;
const HEADER_LEN: usize = 8 + 5 * 8;

/// A saved state with the formulation that produced it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub state: FluidState,
    pub scheme: Scheme,
}

pub fn encode_checkpoint(state: &FluidState, scheme: Scheme) -> Vec<u8> {
    let g = state.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 7 * 8 * g.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n() as u64).to_le_bytes());
    out.extend_from_slice(&g.box_len().to_le_bytes());
    out.extend_from_slice(&state.time().to_le_bytes());
    let code: u64 = match scheme {
        Scheme::Nonconservative => 0,
        Scheme::Conservative => 1,
    };
    out.extend_from_slice(&code.to_le_bytes());
    for a in state.arrays() {
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn word(bytes: &[u8], at: usize) -> [u8; 8] {
    bytes[at..at + 8].try_into().expect("eight bytes")
}

/// Decodes a checkpoint; nothing is built unless the whole buffer is valid.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: String| Error::Checkpoint(m);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("truncated header: {} bytes", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u64::from_le_bytes(word(bytes, 8));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let n = u64::from_le_bytes(word(bytes, 16));
    let box_len = f64::from_le_bytes(word(bytes, 24));
    let time = f64::from_le_bytes(word(bytes, 32));
    let scheme = match u64::from_le_bytes(word(bytes, 40)) {
        0 => Scheme::Nonconservative,
        1 => Scheme::Conservative,
        s => return Err(bad(format!("unknown scheme code {s}"))),
    };
    if !time.is_finite() {
        return Err(bad(format!("non-finite time {time}")));
    }
    let n = usize::try_from(n).map_err(|_| bad(format!("grid size {n} too large")))?;
    if n > 1024 {
        return Err(bad(format!("grid size {n} too large")));
    }
    let len = n * n * n;
    let expected = HEADER_LEN + 7 * 8 * len;
    if bytes.len() < expected {
        return Err(bad(format!("truncated: {} bytes, expected {expected}", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(bad(format!("{} trailing bytes", bytes.len() - expected)));
    }
    let grid = Grid::new(n, box_len).map_err(|e| bad(e.to_string()))?;
    let mut arrays: Vec<Vec<f64>> = Vec::with_capacity(7);
    for a in 0..7 {
        let base = HEADER_LEN + a * 8 * len;
        let v: Vec<f64> = bytes[base..base + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad(format!("non-finite value in array {a}")));
        }
        arrays.push(v);
    }
    let mut it = arrays.into_iter();
    let rho = Field::new(&grid, vec![it.next().expect("seven arrays")])?;
    let w = Field::new(&grid, it.by_ref().take(3).collect())?;
    let u = Field::new(&grid, it.collect())?;
    Ok(Checkpoint {
        state: FluidState::new(time, rho, w, u)?,
        scheme,
    })
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_checkpoint(state: &FluidState, scheme: Scheme, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, encode_checkpoint(state, scheme))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

pub const MONITOR_COLUMNS: [&str; 8] = [
    "t",
    "energy_residual",
    "w_slack",
    "rho_sup",
    "int_grad_u_inf",
    "int_grad_w_inf",
    "h1b_ratio",
    "h1e_ratio",
];

pub fn monitor_to_csv(report: &MonitorReport) -> String {
    csv_table(
        &MONITOR_COLUMNS,
        report.rows.iter().map(|r| {
            vec![
                r.t,
                r.energy_residual,
                r.w_slack,
                r.rho_sup,
                r.int_grad_u_inf,
                r.int_grad_w_inf,
                r.h1b_ratio,
                r.h1e_ratio,
            ]
        }),
    )
}

/// Samples of a twin run; the interval checks sit between samples, so row i
/// carries the check on [tᵢ, tᵢ₊₁] (empty cells on the last row).
pub fn stability_to_csv(report: &StabilityReport) -> String {
    let mut out = String::from("t,delta_e,delta_d,delta_rho_hm1,rhs,interval_lhs,interval_rhs,interval_residual\n");
    for (i, s) in report.samples.iter().enumerate() {
        let mut cells = vec![fmt17(s.t), fmt17(s.delta_e), fmt17(s.delta_d), fmt17(s.delta_rho_hm1), fmt17(s.rhs)];
        match report.checks.get(i) {
            Some(c) => cells.extend([fmt17(c.lhs), fmt17(c.rhs), fmt17(c.residual)]),
            None => cells.extend([String::new(), String::new(), String::new()]),
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn density_longtime_to_csv(report: &DensityLongtime) -> String {
    csv_table(
        &["t", "hm1_distance", "tail_flux"],
        report
            .distance
            .iter()
            .zip(&report.tail_flux)
            .map(|(d, f)| vec![d.0, d.1, f.1]),
    )
}

pub fn inequalities_to_csv(stats: &[InequalityStats]) -> String {
    let mut out = String::from("inequality,n,max_ratio,min_ratio,amplitude_defect\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.id.name(),
            s.n,
            fmt17(s.max_ratio),
            fmt17(s.min_ratio),
            fmt17(s.amplitude_defect)
        );
    }
    out
}

/// Python/matplotlib script plotting the ledger columns from `csv_path`.
pub fn plot_script(csv_path: &str) -> String {
    let groups: [(&str, &[&str]); 5] = [
        ("energies", &["e0", "e1", "e2"]),
        ("dissipations", &["d0", "d1", "d1_tilde", "d2"]),
        ("besov", &["u_besov_m1_2", "u_besov_m3_2", "u_besov_1_2_1"]),
        ("lipschitz", &["w_inf", "grad_w_inf", "grad_u_inf", "u_inf", "w_bound"]),
        ("integrals", &["int_d0", "int_grad_u_inf", "int_grad_w_inf", "int_weighted_d1_tilde"]),
    ];
    let mut s = String::new();
    let _ = writeln!(s, "import csv");
    let _ = writeln!(s, "import matplotlib");
    let _ = writeln!(s, "matplotlib.use(\"Agg\")");
    let _ = writeln!(s, "import matplotlib.pyplot as plt\n");
    let _ = writeln!(s, "with open({csv_path:?}) as f:");
    let _ = writeln!(s, "    rows = list(csv.DictReader(f))");
    let _ = writeln!(s, "t = [float(r[\"t\"]) for r in rows]\n");
    let _ = writeln!(s, "groups = [");
    for (name, cols) in groups {
        let quoted: Vec<String> = cols.iter().map(|c| format!("{c:?}")).collect();
        let _ = writeln!(s, "    ({name:?}, [{}]),", quoted.join(", "));
    }
    let _ = writeln!(s, "]\n");
    let _ = writeln!(s, "fig, axes = plt.subplots(len(groups), 1, figsize=(7, 3 * len(groups)), sharex=True)");
    let _ = writeln!(s, "for ax, (title, cols) in zip(axes, groups):");
    let _ = writeln!(s, "    for c in cols:");
    let _ = writeln!(s, "        ax.plot(t, [float(r[c]) for r in rows], label=c)");
    let _ = writeln!(s, "    ax.set_title(title)");
    let _ = writeln!(s, "    ax.set_yscale(\"symlog\", linthresh=1e-12)");
    let _ = writeln!(s, "    ax.legend(fontsize=\"small\")");
    let _ = writeln!(s, "axes[-1].set_xlabel(\"t\")");
    let _ = writeln!(s, "fig.tight_layout()");
    let _ = writeln!(s, "fig.savefig({:?})", format!("{csv_path}.png"));
    s
}
