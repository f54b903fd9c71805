//! Keyword scoring, psychometric SRT fits, box statistics and one-way ANOVA.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_normalization::char::is_combining_mark;

pub const KEYWORDS_PER_SENTENCE: usize = 5;
pub const SENTENCES_PER_CONDITION: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("expected {KEYWORDS_PER_SENTENCE} keywords, got {0}")]
    KeywordCount(usize),
    #[error("condition {condition} incomplete: {scored} of {SENTENCES_PER_CONDITION} sentences scored")]
    IncompleteCondition { condition: Condition, scored: usize },
    #[error("SRT not bracketed")]
    NotBracketed,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("ANOVA undefined: zero within- and between-group variance")]
    DegenerateAnova,
    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Plain,
    #[serde(rename = "SSDRC")]
    Ssdrc,
    #[serde(rename = "wSSDRC")]
    Wssdrc,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Plain, Condition::Ssdrc, Condition::Wssdrc];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Plain => "Plain",
            Condition::Ssdrc => "SSDRC",
            Condition::Wssdrc => "wSSDRC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lowercases, strips diacritics, folds final sigma, drops punctuation and
/// splits on whitespace.
pub fn normalize_text(s: &str) -> Vec<String> {
    let folded: String = s
        .to_lowercase()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| if c == 'ς' { 'σ' } else { c })
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    folded.split_whitespace().map(str::to_owned).collect()
}

/// Number of keywords found in the response, each response token matching at
/// most one keyword.
pub fn score_keywords(response: &str, keywords: &[String]) -> Result<u8> {
    if keywords.len() != KEYWORDS_PER_SENTENCE {
        return Err(EvalError::KeywordCount(keywords.len()));
    }
    let mut pool: BTreeMap<String, usize> = BTreeMap::new();
    for t in normalize_text(response) {
        *pool.entry(t).or_default() += 1;
    }
    let mut hits = 0u8;
    for k in keywords {
        let key = normalize_text(k).join(" ");
        if let Some(n) = pool.get_mut(&key).filter(|n| **n > 0) {
            *n -= 1;
            hits += 1;
        }
    }
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub utt_id: String,
    pub condition: Condition,
    pub keywords: Vec<String>,
    pub response_text: String,
    pub hits: u8,
}

impl ScoredResponse {
    pub fn score(utt_id: &str, condition: Condition, keywords: &[String], response_text: &str) -> Result<Self> {
        let hits = score_keywords(response_text, keywords)?;
        Ok(Self {
            utt_id: utt_id.to_owned(),
            condition,
            keywords: keywords.iter().map(|k| normalize_text(k).join(" ")).collect(),
            response_text: response_text.to_owned(),
            hits,
        })
    }
}

/// `100 · Σhits / 40` over the eight sentences of one condition.
pub fn condition_percent(responses: &[ScoredResponse], condition: Condition) -> Result<f64> {
    let hits: Vec<u8> = responses.iter().filter(|r| r.condition == condition).map(|r| r.hits).collect();
    if hits.len() != SENTENCES_PER_CONDITION {
        return Err(EvalError::IncompleteCondition { condition, scored: hits.len() });
    }
    let total: u32 = hits.iter().map(|&h| h as u32).sum();
    Ok(100.0 * total as f64 / (SENTENCES_PER_CONDITION * KEYWORDS_PER_SENTENCE) as f64)
}

// ---------------------------------------------------------------------------
// psychometric fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychometricFit {
    /// Tested SNR nearest the fitted midpoint.
    pub srt_db: f64,
    pub midpoint_db: f64,
    /// Logistic slope parameter `k` per dB.
    pub slope: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn logistic(x: f64, m: f64, k: f64) -> f64 {
    1.0 / (1.0 + (-k * (x - m)).exp())
}

fn sse(points: &[(f64, f64)], m: f64, k: f64) -> f64 {
    points.iter().map(|&(x, p)| (logistic(x, m, k) - p).powi(2)).sum()
}

const SLOPE_MIN: f64 = 0.01;
const SLOPE_MAX: f64 = 10.0;

/// Least-squares logistic fit: coarse grid over `(m, k)` then a shrinking
/// pattern search from the best grid cell.
pub fn fit_psychometric(points: &[(f64, f64)]) -> Result<PsychometricFit> {
    if points.len() < 3 {
        return Err(EvalError::TooFewPoints { needed: 3, got: points.len() });
    }
    for &(x, p) in points {
        if !x.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(EvalError::Invalid(format!("point ({x}, {p})")));
        }
    }
    let lo_p = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi_p = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(lo_p <= 0.5 && hi_p >= 0.5 && lo_p < hi_p) {
        return Err(EvalError::NotBracketed);
    }
    let x_lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = (x_hi - x_lo).max(1.0);

    let (m_lo, m_hi) = (x_lo - 0.5 * span, x_hi + 0.5 * span);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let m_steps = 200;
    let k_steps = 60;
    for i in 0..=m_steps {
        let m = m_lo + (m_hi - m_lo) * i as f64 / m_steps as f64;
        for j in 0..=k_steps {
            let k = SLOPE_MIN * (SLOPE_MAX / SLOPE_MIN).powf(j as f64 / k_steps as f64);
            let e = sse(points, m, k);
            if e < best.0 {
                best = (e, m, k);
            }
        }
    }
    let (mut e, mut m, mut k) = best;
    let mut dm = (m_hi - m_lo) / m_steps as f64;
    let mut dlk = (SLOPE_MAX / SLOPE_MIN).ln() / k_steps as f64;
    while dm > 1e-9 {
        let mut improved = false;
        for (cm, clk) in [(dm, 0.0), (-dm, 0.0), (0.0, dlk), (0.0, -dlk)] {
            let nm = (m + cm).clamp(m_lo, m_hi);
            let nk = (k.ln() + clk).exp().clamp(SLOPE_MIN, SLOPE_MAX);
            let ne = sse(points, nm, nk);
            if ne < e {
                (e, m, k) = (ne, nm, nk);
                improved = true;
            }
        }
        if !improved {
            dm *= 0.5;
            dlk *= 0.5;
        }
    }
    let srt_db = nearest_tested(points, m);
    Ok(PsychometricFit { srt_db, midpoint_db: m, slope: k, points: points.to_vec() })
}

fn nearest_tested(points: &[(f64, f64)], m: f64) -> f64 {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    // ties go to the lower SNR
    xs.into_iter().fold(f64::NAN, |acc, x| if acc.is_nan() || (x - m).abs() < (acc - m).abs() { x } else { acc })
}

// ---------------------------------------------------------------------------
// ANOVA and the F distribution

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_value: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
}

pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    if groups.len() < 2 {
        return Err(EvalError::Invalid(format!("{} groups, need at least 2", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(EvalError::Invalid(format!("group of size {}, need at least 2", g.len())));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EvalError::Invalid("non-finite value".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (mean - grand).powi(2);
        ss_within += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let (f_value, p_value) = if ss_within == 0.0 {
        if ss_between == 0.0 {
            return Err(EvalError::DegenerateAnova);
        }
        (f64::INFINITY, 0.0)
    } else {
        let f = (ss_between / df_between as f64) / (ss_within / df_within as f64);
        (f, f_survival(f, df_between, df_within)?)
    };
    Ok(AnovaResult { f_value, p_value, df_between, df_within, ss_between, ss_within })
}

/// `P(F > f)` for an F distribution with `(df1, df2)` degrees of freedom.
pub fn f_survival(f: f64, df1: usize, df2: usize) -> Result<f64> {
    if df1 == 0 || df2 == 0 {
        return Err(EvalError::Invalid(format!("degrees of freedom ({df1}, {df2})")));
    }
    if f.is_nan() || f < 0.0 {
        return Err(EvalError::Invalid(format!("F = {f}")));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let (d1, d2) = (df1 as f64, df2 as f64);
    let x = d2 / (d2 + d1 * f);
    Ok(reg_inc_beta(x, d2 / 2.0, d1 / 2.0))
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularised incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b).clamp(0.0, 1.0)
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

// ---------------------------------------------------------------------------
// box statistics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Type-7 quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn boxstats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::Invalid("non-finite value".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.5), quantile_sorted(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
    let outliers = s.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers,
    })
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "NH")]
    Nh,
    #[serde(rename = "HI")]
    Hi,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Nh => "NH",
            Group::Hi => "HI",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NH" => Some(Group::Nh),
            "HI" => Some(Group::Hi),
            _ => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerReport {
    pub listener_id: String,
    pub group: Group,
    pub srt_db: Option<f64>,
    pub percent: BTreeMap<Condition, f64>,
    pub hits: BTreeMap<Condition, Vec<u8>>,
    #[serde(default)]
    pub excluded: bool,
}

impl ListenerReport {
    pub fn from_responses(
        listener_id: &str,
        group: Group,
        srt_db: Option<f64>,
        responses: &[ScoredResponse],
    ) -> Result<Self> {
        let mut percent = BTreeMap::new();
        let mut hits = BTreeMap::new();
        for c in Condition::ALL {
            percent.insert(c, condition_percent(responses, c)?);
            hits.insert(c, responses.iter().filter(|r| r.condition == c).map(|r| r.hits).collect());
        }
        Ok(Self { listener_id: listener_id.to_owned(), group, srt_db, percent, hits, excluded: false })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    /// Conditions compared, e.g. `["Plain", "SSDRC"]`.
    pub conditions: Vec<Condition>,
    pub result: AnovaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: Group,
    pub listeners: Vec<ListenerReport>,
    pub boxstats: BTreeMap<Condition, BoxStats>,
    /// Omnibus test over all three conditions followed by the three pairs.
    pub anova: Vec<AnovaRow>,
}

/// Per-condition box statistics and ANOVA table over the non-excluded
/// listeners of one group. Needs at least two listeners.
pub fn group_report(group: Group, listeners: &[ListenerReport]) -> Result<GroupReport> {
    let included: Vec<&ListenerReport> = listeners.iter().filter(|l| l.group == group && !l.excluded).collect();
    if included.len() < 2 {
        return Err(EvalError::TooFewPoints { needed: 2, got: included.len() });
    }
    let column = |c: Condition| -> Vec<f64> { included.iter().map(|l| l.percent[&c]).collect() };
    let mut boxes = BTreeMap::new();
    for c in Condition::ALL {
        boxes.insert(c, boxstats(&column(c))?);
    }
    let sets: [&[Condition]; 4] = [
        &Condition::ALL,
        &[Condition::Plain, Condition::Ssdrc],
        &[Condition::Plain, Condition::Wssdrc],
        &[Condition::Ssdrc, Condition::Wssdrc],
    ];
    let mut anova = Vec::new();
    for set in sets {
        let groups: Vec<Vec<f64>> = set.iter().map(|&c| column(c)).collect();
        let result = match anova_oneway(&groups) {
            Ok(r) => r,
            // identical constant columns: no variability at all, report F = 0
            Err(EvalError::DegenerateAnova) => AnovaResult {
                f_value: 0.0,
                p_value: 1.0,
                df_between: set.len() - 1,
                df_within: groups.iter().map(Vec::len).sum::<usize>() - set.len(),
                ss_between: 0.0,
                ss_within: 0.0,
            },
            Err(e) => return Err(e),
        };
        anova.push(AnovaRow { conditions: set.to_vec(), result });
    }
    Ok(GroupReport {
        group,
        listeners: listeners.iter().filter(|l| l.group == group).cloned().collect(),
        boxstats: boxes,
        anova,
    })
}

/// One row per listener: id, group, srt, three percents, excluded flag.
pub fn listeners_csv(listeners: &[ListenerReport]) -> String {
    let mut out = String::from("listener_id,group,srt_db,Plain,SSDRC,wSSDRC,excluded\n");
    for l in listeners {
        let srt = l.srt_db.map(|v| v.to_string()).unwrap_or_default();
        let p = |c| l.percent.get(&c).map(|v: &f64| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            l.listener_id,
            l.group,
            srt,
            p(Condition::Plain),
            p(Condition::Ssdrc),
            p(Condition::Wssdrc),
            l.excluded
        ));
    }
    out
}

/// Box statistics and ANOVA rows of a group report in CSV form.
pub fn group_csv(r: &GroupReport) -> String {
    let mut out = String::from("group,kind,label,median,q1,q3,whisker_low,whisker_high,outliers,f,p,df1,df2\n");
    for (c, b) in &r.boxstats {
        let outl: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
        out.push_str(&format!(
            "{},box,{},{},{},{},{},{},{},,,,\n",
            r.group,
            c,
            b.median,
            b.q1,
            b.q3,
            b.whisker_low,
            b.whisker_high,
            outl.join(" ")
        ));
    }
    for row in &r.anova {
        let label: Vec<&str> = row.conditions.iter().map(|c| c.as_str()).collect();
        let a = &row.result;
        out.push_str(&format!(
            "{},anova,{},,,,,,,{},{},{},{}\n",
            r.group,
            label.join("-"),
            a.f_value,
            a.p_value,
            a.df_between,
            a.df_within
        ));
    }
    out
}
