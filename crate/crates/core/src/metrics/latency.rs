use crate::error::{NastError, Result};

/// When each emitted token was written, as a number of source tokens read.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRecord {
    /// `g[t]` for 0-based target index `t`.
    pub g: Vec<usize>,
    pub src_len: usize,
    pub tgt_len: usize,
}

impl PolicyRecord {
    /// Record with `|y|` taken from the number of emitted tokens.
    pub fn new(g: Vec<usize>, src_len: usize) -> Result<Self> {
        let tgt_len = g.len();
        let p = Self { g, src_len, tgt_len };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.src_len == 0 || self.tgt_len == 0 || self.g.is_empty() {
            return Err(NastError::InvalidTrace("empty source or output".into()));
        }
        if self.g.windows(2).any(|w| w[1] < w[0]) {
            return Err(NastError::InvalidTrace("g is not non-decreasing".into()));
        }
        if self.g[0] < 1 || *self.g.last().unwrap() > self.src_len {
            return Err(NastError::InvalidTrace(format!(
                "g must lie in [1, {}], got {:?}",
                self.src_len, self.g
            )));
        }
        Ok(())
    }

    /// `|y| / |x|`.
    pub fn rate(&self) -> f64 {
        self.tgt_len as f64 / self.src_len as f64
    }

    /// First 1-based `t` with `g(t) = |x|`.
    pub fn cutoff(&self) -> Option<usize> {
        self.g.iter().position(|&v| v == self.src_len).map(|i| i + 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatencyMetrics {
    pub al: f64,
    pub ap: f64,
    pub cw: f64,
    pub dal: f64,
}

fn metrics_with_cutoff(p: &PolicyRecord, tau: usize) -> LatencyMetrics {
    let r = p.rate();
    let lag = |t: usize, g: f64| g - (t - 1) as f64 / r;
    let al = (1..=tau).map(|t| lag(t, p.g[t - 1] as f64)).sum::<f64>() / tau as f64;
    let ap = p.g.iter().sum::<usize>() as f64 / (p.src_len * p.tgt_len) as f64;
    let mut prev = 0;
    let (mut reads, mut bursts) = (0, 0);
    for &g in &p.g {
        if g > prev {
            reads += g - prev;
            bursts += 1;
        }
        prev = g;
    }
    let cw = reads as f64 / bursts as f64;
    let mut gp = 0.0;
    let mut dal = 0.0;
    for (i, &g) in p.g.iter().enumerate() {
        gp = if i == 0 { g as f64 } else { (g as f64).max(gp + 1.0 / r) };
        dal += lag(i + 1, gp);
    }
    LatencyMetrics {
        al,
        ap,
        cw,
        dal: dal / p.g.len() as f64,
    }
}

/// AL, AP, CW and DAL of a policy whose `g` reaches `|x|`.
pub fn latency_metrics(p: &PolicyRecord) -> Result<LatencyMetrics> {
    p.validate()?;
    let tau = p
        .cutoff()
        .ok_or_else(|| NastError::InvalidTrace(format!("g never reaches |x| = {}", p.src_len)))?;
    Ok(metrics_with_cutoff(p, tau))
}

/// Like [`latency_metrics`], but a policy that never reaches `|x|` uses `τ = |g|`.
pub fn latency_metrics_lenient(p: &PolicyRecord) -> Result<LatencyMetrics> {
    p.validate()?;
    let tau = p.cutoff().unwrap_or(p.g.len());
    Ok(metrics_with_cutoff(p, tau))
}
