//! Trading-calendar alignment, differencing and scaling, VAR/SIC lag
//! selection and the lagged regression design.

use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::PriceSeries;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::sentiment::SentimentIntensitySeries;
use crate::topics::TopicIntensitySeries;

pub const DEFAULT_P_MAX: usize = 10;
pub const AUTOCORRELATION_WARNING: f64 = 0.97;
pub const POLARITY_COLUMN: &str = "polarity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformMeta {
    pub differenced: bool,
    pub train_end: NaiveDate,
    /// Number of leading rows dated on or before `train_end`.
    pub train_rows: usize,
    /// One scale per panel column.
    pub scales: Vec<Scale>,
    /// Raw price level just before the first panel date when differenced.
    pub base_price: Option<f64>,
}

/// Daily series on a shared trading-day index. Column 0 is the target
/// (`price`, or `dprice` once differenced); the rest are exogenous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPanel {
    pub dates: Vec<NaiveDate>,
    /// Raw price level on every panel date.
    pub raw_price: Vec<f64>,
    pub columns: Vec<PanelColumn>,
    pub transform: Option<TransformMeta>,
}

impl IndicatorPanel {
    pub fn from_columns(dates: Vec<NaiveDate>, raw_price: Vec<f64>, columns: Vec<PanelColumn>) -> Result<Self> {
        if dates.is_empty() {
            return Err(Error::EmptyInput("panel dates"));
        }
        if let Some(pos) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedDates(pos + 1));
        }
        if raw_price.len() != dates.len() || columns.iter().any(|c| c.values.len() != dates.len()) {
            return Err(Error::DimensionMismatch("panel columns differ in length from the date index".into()));
        }
        if columns.is_empty() {
            return Err(Error::EmptyInput("panel columns"));
        }
        Ok(IndicatorPanel {
            dates,
            raw_price,
            columns,
            transform: None,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn target(&self) -> &PanelColumn {
        &self.columns[0]
    }

    /// Rows used for fitting: those dated on or before the training end.
    pub fn train_rows(&self) -> usize {
        self.transform.as_ref().map_or(self.len(), |t| t.train_rows)
    }

    /// Raw price level on the trading day before row `row`.
    pub fn previous_price(&self, row: usize) -> Option<f64> {
        if row == 0 {
            self.transform.as_ref().and_then(|t| t.base_price)
        } else {
            self.raw_price.get(row - 1).copied()
        }
    }

    /// Undoes the scaling of column `col`.
    pub fn unscale(&self, col: usize, value: f64) -> f64 {
        match &self.transform {
            Some(t) => t.scales[col].invert(value),
            None => value,
        }
    }

    /// Raw price level implied by a transformed target value at `row`.
    pub fn target_to_price(&self, row: usize, value: f64) -> Option<f64> {
        let v = self.unscale(0, value);
        match &self.transform {
            Some(t) if t.differenced => self.previous_price(row).map(|p| p + v),
            _ => Some(v),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (i, d) in self.dates.iter().enumerate() {
            let _ = write!(out, "{d}");
            for c in &self.columns {
                let _ = write!(out, ",{}", c.values[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Aligns indicators to the price calendar.
///
/// The index is the price dates inside the common date range of all three
/// inputs. Each indicator observation is assigned to the first price date on
/// or after it, observations landing on the same trading day are averaged,
/// and trading days that receive none carry the previous trading day's value.
pub fn align_panel(
    price: &PriceSeries,
    topics: &TopicIntensitySeries,
    si: &SentimentIntensitySeries,
) -> Result<IndicatorPanel> {
    if price.is_empty() || topics.dates.is_empty() || si.dates.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let start = price.dates[0].max(topics.dates[0]).max(si.dates[0]);
    let end = price.dates[price.len() - 1]
        .min(*topics.dates.last().unwrap())
        .min(*si.dates.last().unwrap());
    let k = topics.k();
    let mut obs_topics = topics.dates.iter().zip(&topics.values).peekable();
    let mut obs_si = si.dates.iter().zip(&si.si).peekable();
    let mut carried: Option<Vec<f64>> = None;
    let mut carried_si: Option<f64> = None;

    let mut dates = Vec::new();
    let mut raw_price = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (&day, &level) in price.dates.iter().zip(&price.values) {
        let mut topic_sum = vec![0.0; k];
        let mut topic_n = 0usize;
        while let Some((_, v)) = obs_topics.next_if(|(d, _)| **d <= day) {
            for (s, x) in topic_sum.iter_mut().zip(v) {
                *s += x;
            }
            topic_n += 1;
        }
        let mut si_sum = 0.0;
        let mut si_n = 0usize;
        while let Some((_, v)) = obs_si.next_if(|(d, _)| **d <= day) {
            si_sum += v;
            si_n += 1;
        }
        if topic_n > 0 {
            carried = Some(topic_sum.iter().map(|s| s / topic_n as f64).collect());
        }
        if si_n > 0 {
            carried_si = Some(si_sum / si_n as f64);
        }
        if day < start || day > end {
            continue;
        }
        let (Some(t), Some(s)) = (&carried, carried_si) else {
            continue;
        };
        let mut row = t.clone();
        row.push(s);
        dates.push(day);
        raw_price.push(level);
        rows.push(row);
    }
    if dates.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let mut columns = vec![PanelColumn {
        name: "price".into(),
        values: raw_price.clone(),
    }];
    for j in 0..=k {
        let name = if j < k { format!("topic{}", j + 1) } else { POLARITY_COLUMN.to_string() };
        columns.push(PanelColumn {
            name,
            values: rows.iter().map(|r| r[j]).collect(),
        });
    }
    IndicatorPanel::from_columns(dates, raw_price, columns)
}

pub fn lag1_autocorrelation(x: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return None;
    }
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Some(cov / var)
}

/// Optionally differences the target, then min-max scales every column with
/// bounds taken from rows dated on or before `train_end`. Later rows may fall
/// outside [0, 1].
pub fn transform_series(panel: &IndicatorPanel, train_end: NaiveDate, difference_price: bool) -> Result<IndicatorPanel> {
    if panel.transform.is_some() {
        return Err(Error::InvalidParameter("panel is already transformed".into()));
    }
    let first = panel.dates[0];
    let last = *panel.dates.last().unwrap();
    if train_end < first || train_end > last {
        return Err(Error::InvalidParameter(format!(
            "train_end {train_end} outside the panel range {first}..{last}"
        )));
    }
    let (dates, raw_price, mut columns, base_price) = if difference_price {
        if panel.len() < 3 {
            return Err(Error::InsufficientData("differencing needs at least 3 rows".into()));
        }
        let mut columns: Vec<PanelColumn> = panel
            .columns
            .iter()
            .map(|c| PanelColumn {
                name: c.name.clone(),
                values: c.values[1..].to_vec(),
            })
            .collect();
        let target = &panel.columns[0].values;
        columns[0] = PanelColumn {
            name: format!("d{}", panel.columns[0].name),
            values: target.windows(2).map(|w| w[1] - w[0]).collect(),
        };
        (panel.dates[1..].to_vec(), panel.raw_price[1..].to_vec(), columns, Some(panel.raw_price[0]))
    } else {
        (panel.dates.clone(), panel.raw_price.clone(), panel.columns.clone(), None)
    };
    let train_rows = dates.partition_point(|d| *d <= train_end);
    if train_rows < 2 {
        return Err(Error::InsufficientData("training range needs at least 2 rows".into()));
    }
    let mut scales = Vec::with_capacity(columns.len());
    for c in &mut columns {
        let train = &c.values[..train_rows];
        let min = train.iter().copied().fold(f64::INFINITY, f64::min);
        let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::ConstantColumn(c.name.clone()));
        }
        if let Some(r) = lag1_autocorrelation(train) {
            if r > AUTOCORRELATION_WARNING {
                log::warn!("column `{}` has lag-1 autocorrelation {r:.3}; consider differencing", c.name);
            }
        }
        let scale = Scale { min, max };
        for v in &mut c.values {
            *v = scale.apply(*v);
        }
        scales.push(scale);
    }
    Ok(IndicatorPanel {
        dates,
        raw_price,
        columns,
        transform: Some(TransformMeta {
            differenced: difference_price,
            train_end,
            train_rows,
            scales,
            base_price,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarFit {
    pub p: usize,
    pub k: usize,
    /// `A_1..A_p`, each K×K, with `A_j[(r, c)]` the effect of series `c` at
    /// lag `j` on series `r`.
    pub coefficients: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    /// Residual covariance `(1/N)·EᵀE`.
    pub sigma: DMatrix<f64>,
    pub n_obs: usize,
}

impl VarFit {
    pub fn sic(&self) -> Result<f64> {
        sic_score(&self.sigma, self.n_obs, self.k, self.p)
    }
}

/// OLS VAR(p) over all rows from `p`.
pub fn fit_var(y: &DMatrix<f64>, p: usize) -> Result<VarFit> {
    fit_var_from(y, p, p)
}

/// OLS VAR(p) using target rows `start..T`; `start ≥ p`, so candidate orders
/// can share one effective sample.
pub fn fit_var_from(y: &DMatrix<f64>, p: usize, start: usize) -> Result<VarFit> {
    let (t, k) = y.shape();
    if k == 0 {
        return Err(Error::EmptyInput("VAR series"));
    }
    if start < p {
        return Err(Error::InvalidParameter(format!("sample start {start} below the order {p}")));
    }
    let n = t.saturating_sub(start);
    if n <= k * k * p + k + 1 {
        return Err(Error::InsufficientData(format!(
            "VAR({p}) on {k} series needs more than {} observations, has {n}",
            k * k * p + k + 1
        )));
    }
    let width = 1 + k * p;
    let mut z = DMatrix::zeros(n, width);
    let mut target = DMatrix::zeros(n, k);
    for (row, ti) in (start..t).enumerate() {
        z[(row, 0)] = 1.0;
        for j in 1..=p {
            for c in 0..k {
                z[(row, 1 + (j - 1) * k + c)] = y[(ti - j, c)];
            }
        }
        for c in 0..k {
            target[(row, c)] = y[(ti, c)];
        }
    }
    let b = least_squares(&z, &target, &format!("VAR({p})"))?;
    let resid = &target - &z * &b;
    let sigma = resid.transpose() * &resid / n as f64;
    let intercept = DVector::from_iterator(k, (0..k).map(|c| b[(0, c)]));
    let coefficients = (1..=p)
        .map(|j| DMatrix::from_fn(k, k, |r, c| b[(1 + (j - 1) * k + c, r)]))
        .collect();
    Ok(VarFit {
        p,
        k,
        coefficients,
        intercept,
        sigma,
        n_obs: n,
    })
}

/// `SIC(p) = ln|Σ̄| + (ln N / N)·K²p`.
pub fn sic_score(sigma: &DMatrix<f64>, n: usize, k: usize, p: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("SIC needs N > 0".into()));
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::NotPositiveDefinite);
    }
    let nf = n as f64;
    Ok(log_det + nf.ln() / nf * (k * k * p) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesLag {
    pub name: String,
    pub p: usize,
    /// `(p, SIC)` for every candidate order.
    pub table: Vec<(usize, f64)>,
}

fn select_order(y: &DMatrix<f64>, p_max: usize) -> Result<(usize, Vec<(usize, f64)>)> {
    if p_max == 0 {
        return Err(Error::InvalidParameter("p_max must be at least 1".into()));
    }
    let mut table = Vec::with_capacity(p_max);
    let mut best = (0usize, f64::INFINITY);
    for p in 1..=p_max {
        let sic = fit_var_from(y, p, p_max)?.sic()?;
        if sic < best.1 {
            best = (p, sic);
        }
        table.push((p, sic));
    }
    Ok((best.0, table))
}

/// Bivariate VAR order minimizing SIC over `1..=p_max` on the sample trimmed
/// to `p_max`. Ties go to the smaller order.
pub fn select_lag(price: &[f64], exog: &[f64], p_max: usize) -> Result<(usize, Vec<(usize, f64)>)> {
    if price.len() != exog.len() {
        return Err(Error::DimensionMismatch("lag selection series differ in length".into()));
    }
    let y = DMatrix::from_fn(price.len(), 2, |r, c| if c == 0 { price[r] } else { exog[r] });
    select_order(&y, p_max)
}

/// Univariate AR order by the same rule, used for the target's own lags.
pub fn select_ar_lag(series: &[f64], p_max: usize) -> Result<(usize, Vec<(usize, f64)>)> {
    select_order(&DMatrix::from_column_slice(series.len(), 1, series), p_max)
}

/// Chosen lag per panel column, the target first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub series: Vec<SeriesLag>,
}

impl LagSelection {
    pub fn fixed(names: &[&str], lags: &[usize]) -> Result<Self> {
        if names.len() != lags.len() || names.is_empty() {
            return Err(Error::DimensionMismatch("one lag per series is required".into()));
        }
        if lags.contains(&0) {
            return Err(Error::InvalidParameter("lags must be at least 1".into()));
        }
        Ok(LagSelection {
            series: names
                .iter()
                .zip(lags)
                .map(|(n, p)| SeriesLag {
                    name: n.to_string(),
                    p: *p,
                    table: Vec::new(),
                })
                .collect(),
        })
    }

    /// The target's own lags only.
    pub fn target_only(&self) -> Self {
        LagSelection {
            series: self.series[..1].to_vec(),
        }
    }

    pub fn max_lag(&self) -> usize {
        self.series.iter().map(|s| s.p).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,p,sic,chosen\n");
        for s in &self.series {
            for (p, sic) in &s.table {
                let _ = writeln!(out, "{},{p},{sic},{}", s.name, u8::from(*p == s.p));
            }
        }
        out
    }
}

/// Per-column lags on the panel's training rows: AR order for the target,
/// bivariate VAR order of (target, column) for every exogenous column.
pub fn select_lags(panel: &IndicatorPanel, p_max: usize) -> Result<LagSelection> {
    let rows = panel.train_rows();
    let target = &panel.columns[0].values[..rows];
    let (p, table) = select_ar_lag(target, p_max)?;
    let mut series = vec![SeriesLag {
        name: panel.columns[0].name.clone(),
        p,
        table,
    }];
    for c in &panel.columns[1..] {
        let (p, table) = select_lag(target, &c.values[..rows], p_max)?;
        series.push(SeriesLag {
            name: c.name.clone(),
            p,
            table,
        });
    }
    Ok(LagSelection { series })
}

/// Lagged regression design for direct `h`-step forecasting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagDesign {
    pub features: DMatrix<f64>,
    pub labels: Vec<String>,
    pub target: Vec<f64>,
    pub horizon: usize,
    /// Target date per row.
    pub dates: Vec<NaiveDate>,
    /// Panel row of each target.
    pub rows: Vec<usize>,
    /// `(panel column, lag j)` behind every feature column.
    pub sources: Vec<(usize, usize)>,
}

impl LagDesign {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Panel row feeding feature `col` of design row `row`.
    pub fn source_row(&self, row: usize, col: usize) -> usize {
        self.rows[row] - self.sources[col].1
    }

    /// Keeps only the listed feature columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> LagDesign {
        LagDesign {
            features: self.features.select_columns(cols),
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
            target: self.target.clone(),
            horizon: self.horizon,
            dates: self.dates.clone(),
            rows: self.rows.clone(),
            sources: cols.iter().map(|&c| self.sources[c]).collect(),
        }
    }
}

/// For the target at panel row `t`, column `c` with lag `p_c` contributes
/// `c(t−h) … c(t−h−p_c+1)`, labelled `name(t-j)`. Usable rows run from
/// `max_p + h − 1` to the end.
pub fn build_lag_design(panel: &IndicatorPanel, lags: &LagSelection, h: usize) -> Result<LagDesign> {
    if h == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let mut sources = Vec::new();
    let mut labels = Vec::new();
    for s in &lags.series {
        let col = panel
            .columns
            .iter()
            .position(|c| c.name == s.name)
            .ok_or_else(|| Error::Misaligned(format!("lag for unknown series `{}`", s.name)))?;
        if s.p == 0 {
            return Err(Error::InvalidParameter(format!("lag of `{}` must be at least 1", s.name)));
        }
        for j in h..h + s.p {
            sources.push((col, j));
            labels.push(format!("{}(t-{j})", s.name));
        }
    }
    let first = lags.max_lag() + h - 1;
    if panel.len() <= first {
        return Err(Error::InsufficientData(format!(
            "panel of {} rows is too short for max lag {} at horizon {h}",
            panel.len(),
            lags.max_lag()
        )));
    }
    let rows: Vec<usize> = (first..panel.len()).collect();
    let features = DMatrix::from_fn(rows.len(), sources.len(), |r, c| {
        let (col, j) = sources[c];
        panel.columns[col].values[rows[r] - j]
    });
    Ok(LagDesign {
        features,
        labels,
        target: rows.iter().map(|&t| panel.columns[0].values[t]).collect(),
        horizon: h,
        dates: rows.iter().map(|&t| panel.dates[t]).collect(),
        rows,
        sources,
    })
}
