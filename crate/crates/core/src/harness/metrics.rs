use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const CSV_HEADER: &str = "episode,won,stages_completed,total_reward,epsilon,wall_ms";
/// Width of the trailing window reported next to the full-run aggregates.
pub const TAIL_EPISODES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub won: bool,
    pub stages_completed: usize,
    /// Unscaled reward in cost units.
    pub total_reward: f64,
    pub epsilon: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rows: Vec<EpisodeRow>,
}

impl RunMetrics {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn winning_rate(&self) -> f64 {
        rate(&self.rows)
    }

    pub fn avg_reward(&self) -> f64 {
        mean_reward(&self.rows)
    }

    /// The last `n` rows (all of them if fewer).
    pub fn tail(&self, n: usize) -> &[EpisodeRow] {
        &self.rows[self.rows.len().saturating_sub(n)..]
    }

    pub fn tail_winning_rate(&self, n: usize) -> f64 {
        rate(self.tail(n))
    }

    pub fn tail_avg_reward(&self, n: usize) -> f64 {
        mean_reward(self.tail(n))
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total_reward).collect()
    }
}

fn rate(rows: &[EpisodeRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.won).count() as f64 / rows.len() as f64
}

fn mean_reward(rows: &[EpisodeRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| r.total_reward).sum::<f64>() / rows.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub episodes: usize,
    pub winning_rate: f64,
    pub avg_reward: f64,
    pub tail_episodes: usize,
    pub winning_rate_tail: f64,
    pub avg_reward_tail: f64,
}

impl Aggregates {
    pub fn of(m: &RunMetrics) -> Self {
        let tail = TAIL_EPISODES.min(m.len());
        Aggregates {
            episodes: m.len(),
            winning_rate: m.winning_rate(),
            avg_reward: m.avg_reward(),
            tail_episodes: tail,
            winning_rate_tail: m.tail_winning_rate(tail),
            avg_reward_tail: m.tail_avg_reward(tail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent_kind: String,
    pub seed: u64,
    #[serde(flatten)]
    pub aggregates: Aggregates,
    pub total_wall_ms: u64,
    /// Random-policy results on the same attack sequences.
    pub baseline: Option<Aggregates>,
}

impl Summary {
    pub fn new(agent_kind: &str, seed: u64, m: &RunMetrics, total_wall_ms: u64, baseline: Option<&RunMetrics>) -> Self {
        Summary {
            agent_kind: agent_kind.to_string(),
            seed,
            aggregates: Aggregates::of(m),
            total_wall_ms,
            baseline: baseline.map(Aggregates::of),
        }
    }
}

/// Trailing mean; the first `window − 1` entries average the available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::Config("moving average of an empty series".into()));
    }
    if window == 0 {
        return Err(HarnessError::Config("moving-average window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

pub fn write_csv(m: &RunMetrics, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in &m.rows {
        w.write_record([
            r.episode.to_string(),
            u8::from(r.won).to_string(),
            r.stages_completed.to_string(),
            r.total_reward.to_string(),
            r.epsilon.to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::Output(io),
        other => HarnessError::Output(std::io::Error::other(format!("{other:?}"))),
    }
}

/// A single polyline of the moving-average reward, one point per episode.
pub fn render_svg(series: &[f64], window: usize) -> Result<String, HarnessError> {
    let ma = moving_average(series, window)?;
    let (w, h, pad) = (800.0, 400.0, 40.0);
    let lo = ma.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let steps = (ma.len().max(2) - 1) as f64;
    let mut pts = String::new();
    for (i, v) in ma.iter().enumerate() {
        let x = pad + (w - 2.0 * pad) * i as f64 / steps;
        let y = h - pad - (h - 2.0 * pad) * (v - lo) / span;
        let _ = write!(pts, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
    }
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - pad, w - pad, h - pad);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#, h - pad);
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{}" font-size="12">episode (moving average, window {window})</text>"#,
        h - 10.0
    );
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="12">{hi:.1}</text>"#, pad - 5.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="12">{lo:.1}</text>"#, h - pad + 15.0);
    let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>"#);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Write `episodes.csv`, `summary.json` and `reward_ma.svg` into `dir`.
pub fn emit_reports(m: &RunMetrics, summary: &Summary, window: usize, dir: &Path) -> Result<(), HarnessError> {
    if m.is_empty() {
        return Err(HarnessError::Config("no episodes to report".into()));
    }
    std::fs::create_dir_all(dir)?;
    write_csv(m, &dir.join("episodes.csv"))?;
    let json = serde_json::to_string_pretty(summary).map_err(|e| HarnessError::Output(e.into()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    std::fs::write(dir.join("reward_ma.svg"), render_svg(&m.rewards(), window)?)?;
    Ok(())
}
