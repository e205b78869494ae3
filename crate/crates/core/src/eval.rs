//! Chronological multi-horizon backtests and Diebold–Mariano comparisons.

use std::fmt::Write as _;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::learn::{metrics, metrics_floored, rfe, Metrics, ModelSpec, RfeParams, RfeResult};
use crate::tsfeat::{build_lag_design, IndicatorPanel, LagSelection};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BacktestParams {
    pub rfe: RfeParams,
    /// Skip feature selection and use every lag column.
    pub skip_rfe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub date: NaiveDate,
    pub predicted: f64,
    pub actual: f64,
    pub predicted_price: f64,
    pub actual_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub model: String,
    pub variant: String,
    pub horizon: usize,
    pub train_end: NaiveDate,
    pub n_train: usize,
    pub features: Vec<String>,
    pub rfe: Option<RfeResult>,
    pub points: Vec<ForecastPoint>,
    /// On the transformed target, mape floored at the RFE floor.
    pub metrics: Metrics,
    /// On reconstructed price levels.
    pub raw_metrics: Metrics,
    pub spec: ModelSpec,
    pub seed: u64,
    pub fingerprint: String,
}

impl ForecastReport {
    pub fn label(&self) -> String {
        format!("{}-{}", self.model, self.variant)
    }

    /// Forecast errors `ŷ − y` on the transformed target.
    pub fn errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.predicted - p.actual).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.points.iter().map(|p| p.date).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Summary table, one row per report.
pub fn results_csv(reports: &[ForecastReport], raw: bool) -> String {
    let mut out = String::from("model,variant,n_features,h,rmse,mae,mape\n");
    for r in reports {
        let m = if raw { r.raw_metrics } else { r.metrics };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model,
            r.variant,
            r.features.len(),
            r.horizon,
            m.rmse,
            m.mae,
            m.mape
        );
    }
    out
}

/// Direct multi-horizon backtest.
///
/// Design rows whose target date is on or before `train_end` train the
/// model; later rows are predicted with features taken from realized
/// history, without refitting. For each `h`, RFE picks features on the
/// training rows before the final fit. Price levels are reconstructed as the
/// previous realized price plus the predicted change when the panel target
/// is differenced.
pub fn backtest(
    panel: &IndicatorPanel,
    lags: &LagSelection,
    spec: &ModelSpec,
    variant: &str,
    train_end: NaiveDate,
    horizons: &[usize],
    params: &BacktestParams,
    seed: u64,
) -> Result<Vec<ForecastReport>> {
    if horizons.is_empty() {
        return Err(Error::EmptyInput("horizons"));
    }
    horizons
        .par_iter()
        .map(|&h| backtest_one(panel, lags, spec, variant, train_end, h, params, seed))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn backtest_one(
    panel: &IndicatorPanel,
    lags: &LagSelection,
    spec: &ModelSpec,
    variant: &str,
    train_end: NaiveDate,
    h: usize,
    params: &BacktestParams,
    seed: u64,
) -> Result<ForecastReport> {
    let design = build_lag_design(panel, lags, h)?;
    let n_train = design.dates.partition_point(|d| *d <= train_end);
    if n_train == 0 || n_train == design.n_rows() {
        return Err(Error::DegenerateSplit(format!(
            "train_end {train_end} leaves {n_train} of {} rows for training at h={h}",
            design.n_rows()
        )));
    }
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..design.n_rows()).collect();
    let x_train = design.features.select_rows(&train_idx);
    let y_train = &design.target[..n_train];

    let (columns, rfe_result) = if params.skip_rfe || design.n_features() < 2 {
        ((0..design.n_features()).collect::<Vec<_>>(), None)
    } else {
        let r = rfe(&x_train, y_train, &design.labels, spec, &params.rfe, derive_seed(seed, 2 * h as u64))?;
        (r.selected.clone(), Some(r))
    };
    let model = spec.fit(&x_train.select_columns(&columns), y_train, derive_seed(seed, 2 * h as u64 + 1))?;
    let x_test = design.features.select_rows(&test_idx).select_columns(&columns);
    let pred = model.predict(&x_test)?;

    let mut points = Vec::with_capacity(test_idx.len());
    for (&i, p) in test_idx.iter().zip(&pred) {
        let row = design.rows[i];
        let actual = design.target[i];
        let price_of = |v: f64| {
            panel
                .target_to_price(row, v)
                .ok_or_else(|| Error::Misaligned(format!("no previous price for row {row}")))
        };
        points.push(ForecastPoint {
            date: design.dates[i],
            predicted: *p,
            actual,
            predicted_price: price_of(*p)?,
            actual_price: panel.raw_price[row],
        });
    }
    let (yhat, y): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.predicted, p.actual)).unzip();
    let scaled = metrics_floored(&yhat, &y, params.rfe.mape_floor)?;
    let (phat, pact): (Vec<f64>, Vec<f64>) = points.iter().map(|p| (p.predicted_price, p.actual_price)).unzip();
    let raw = metrics(&phat, &pact).or_else(|_| metrics_floored(&phat, &pact, params.rfe.mape_floor))?;
    Ok(ForecastReport {
        model: spec.name().to_string(),
        variant: variant.to_string(),
        horizon: h,
        train_end,
        n_train,
        features: columns.iter().map(|&c| design.labels[c].clone()).collect(),
        rfe: rfe_result,
        points,
        metrics: scaled,
        raw_metrics: raw,
        spec: *spec,
        seed,
        fingerprint: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Squared,
    Absolute,
}

impl Loss {
    pub fn apply(&self, e: f64) -> f64 {
        match self {
            Loss::Squared => e * e,
            Loss::Absolute => e.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmOutcome {
    Tested,
    /// Identical losses on every date.
    Indistinguishable,
    /// Nonzero but constant loss differential; the statistic is infinite.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    /// Small-sample adjusted statistic; negative favours the first series.
    pub statistic: f64,
    pub unadjusted: f64,
    pub two_sided_p: f64,
    /// `P(T ≤ DM*)`: small values mean the first series has smaller loss.
    pub p_better: f64,
    pub p_worse: f64,
    pub h: usize,
    pub n: usize,
    pub loss: Loss,
    /// The long-run variance was negative and fell back to `γ_0`.
    pub variance_fallback: bool,
    pub outcome: DmOutcome,
}

/// Diebold–Mariano test with the Harvey–Leybourne–Newbold adjustment.
///
/// `V = γ_0 + 2·Σ_{k=1}^{h−1} γ_k`, `DM = d̄/√(V/n)`,
/// `DM* = DM·√((n + 1 − 2h + h(h−1)/n)/n)` against Student-t with `n − 1`
/// degrees of freedom.
pub fn dm_test(e_a: &[f64], e_b: &[f64], h: usize, loss: Loss) -> Result<DmResult> {
    if e_a.len() != e_b.len() {
        return Err(Error::DimensionMismatch(format!("error series of length {} and {}", e_a.len(), e_b.len())));
    }
    if h == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let n = e_a.len();
    if n <= h || n < 2 {
        return Err(Error::InsufficientData(format!("DM test needs n > h, got n={n}, h={h}")));
    }
    let d: Vec<f64> = e_a.iter().zip(e_b).map(|(a, b)| loss.apply(*a) - loss.apply(*b)).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let gamma = |k: usize| (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / nf;
    let g0 = gamma(0);
    let mut base = DmResult {
        statistic: 0.0,
        unadjusted: 0.0,
        two_sided_p: 1.0,
        p_better: 0.5,
        p_worse: 0.5,
        h,
        n,
        loss,
        variance_fallback: false,
        outcome: DmOutcome::Indistinguishable,
    };
    if d.iter().all(|v| *v == 0.0) {
        return Ok(base);
    }
    if d.iter().all(|v| *v == d[0]) {
        let s = if mean < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
        base.statistic = s;
        base.unadjusted = s;
        base.p_better = if mean < 0.0 { 0.0 } else { 1.0 };
        base.p_worse = 1.0 - base.p_better;
        base.two_sided_p = 0.0;
        base.outcome = DmOutcome::Degenerate;
        return Ok(base);
    }
    let mut v = g0 + 2.0 * (1..h).map(gamma).sum::<f64>();
    if v <= 0.0 {
        v = g0;
        base.variance_fallback = true;
    }
    let dm = mean / (v / nf).sqrt();
    let hf = h as f64;
    let adj = dm * ((nf + 1.0 - 2.0 * hf + hf * (hf - 1.0) / nf) / nf).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let tail = t.cdf(-adj.abs());
    base.p_better = if adj <= 0.0 { tail } else { 1.0 - tail };
    base.p_worse = 1.0 - base.p_better;
    base.two_sided_p = (2.0 * base.p_better.min(base.p_worse)).min(1.0);
    base.statistic = adj;
    base.unadjusted = dm;
    base.outcome = DmOutcome::Tested;
    Ok(base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmRow {
    pub baseline: String,
    pub challenger: String,
    pub h: usize,
    /// `better` rows hold p-values for the baseline beating the challenger.
    pub direction: String,
    pub p: f64,
    pub result: DmResult,
}

/// DM tests of the baseline report against every other report per horizon:
/// a `better` and a `worse` row for each pair.
pub fn compare_models(reports: &[ForecastReport], baseline: &str, horizons: &[usize], loss: Loss) -> Result<Vec<DmRow>> {
    let mut rows = Vec::new();
    for &h in horizons {
        let at_h: Vec<&ForecastReport> = reports.iter().filter(|r| r.horizon == h).collect();
        let base = at_h
            .iter()
            .find(|r| r.label() == baseline)
            .ok_or_else(|| Error::Misaligned(format!("no report `{baseline}` at h={h}")))?;
        for other in at_h.iter().filter(|r| r.label() != baseline) {
            if other.dates() != base.dates() {
                return Err(Error::Misaligned(format!(
                    "`{}` and `{baseline}` have different test dates at h={h}",
                    other.label()
                )));
            }
            let result = dm_test(&base.errors(), &other.errors(), h, loss)?;
            for (direction, p) in [("better", result.p_better), ("worse", result.p_worse)] {
                rows.push(DmRow {
                    baseline: baseline.to_string(),
                    challenger: other.label(),
                    h,
                    direction: direction.to_string(),
                    p,
                    result,
                });
            }
        }
    }
    Ok(rows)
}

pub fn dm_csv(rows: &[DmRow]) -> String {
    let mut out = String::from("baseline,challenger,h,direction,p\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.baseline, r.challenger, r.h, r.direction, r.p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::TreeParams;
    use crate::tsfeat::{transform_series, PanelColumn};
    use chrono::Duration;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Literal transcription of the adjusted statistic, kept separate from
    /// the implementation.
    fn oracle(a: &[f64], b: &[f64], h: usize) -> f64 {
        let n = a.len();
        let mut d = Vec::new();
        for i in 0..n {
            d.push(a[i] * a[i] - b[i] * b[i]);
        }
        let mut mean = 0.0;
        for v in &d {
            mean += v;
        }
        mean /= n as f64;
        let mut v = 0.0;
        for k in 0..h {
            let mut g = 0.0;
            for t in k..n {
                g += (d[t] - mean) * (d[t - k] - mean);
            }
            g /= n as f64;
            v += if k == 0 { g } else { 2.0 * g };
        }
        let stat = mean / (v / n as f64).sqrt();
        let (nf, hf) = (n as f64, h as f64);
        stat * ((nf + 1.0 - 2.0 * hf + hf * (hf - 1.0) / nf) / nf).sqrt()
    }

    fn fixed_pair() -> (Vec<f64>, Vec<f64>) {
        let a = (0..40).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.5).collect();
        let b = (0..40).map(|i| ((i * 3) % 7) as f64 * 0.25 - 0.6).collect();
        (a, b)
    }

    #[test]
    fn identical_errors_are_indistinguishable() {
        let e = [0.3, -0.1, 0.5, 0.2];
        let r = dm_test(&e, &e, 1, Loss::Squared).unwrap();
        assert_eq!(r.outcome, DmOutcome::Indistinguishable);
        assert_eq!((r.statistic, r.two_sided_p), (0.0, 1.0));
    }

    #[test]
    fn alternating_vectors_match_hand_arithmetic() {
        let a: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
        let b: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 2.0 } else { 1.0 }).collect();
        let r = dm_test(&a, &b, 1, Loss::Squared).unwrap();
        assert!((r.statistic - oracle(&a, &b, 1)).abs() < 1e-9);
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_better - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_vectors_match_reference_values() {
        let (a, b) = fixed_pair();
        let r1 = dm_test(&a, &b, 1, Loss::Squared).unwrap();
        assert!((r1.statistic - oracle(&a, &b, 1)).abs() < 1e-9);
        assert!((r1.unadjusted + 1.8830183104072873).abs() < 1e-9);
        assert!((r1.statistic + 1.8593316025916107).abs() < 1e-9);
        assert!((r1.p_better - 0.03526826880619519).abs() < 1e-9);
        let r3 = dm_test(&a, &b, 3, Loss::Squared).unwrap();
        assert!((r3.statistic - oracle(&a, &b, 3)).abs() < 1e-9);
        assert!((r3.statistic + 2.9305140024349914).abs() < 1e-9);
        assert!((r3.p_better - 0.0028159641011456654).abs() < 1e-9);
        assert!(!r3.variance_fallback);
    }

    #[test]
    fn negative_variance_falls_back_to_gamma_zero() {
        let (a, b) = fixed_pair();
        let r = dm_test(&a, &b, 2, Loss::Squared).unwrap();
        assert!(r.variance_fallback);
        assert!((r.statistic + 1.8122522749264498).abs() < 1e-9);
        assert!((r.p_better - 0.038825737529075706).abs() < 1e-9);
        let abs = dm_test(&a, &b, 1, Loss::Absolute).unwrap();
        assert!((abs.statistic + 1.4342195480137365).abs() < 1e-9);
        assert!((abs.p_better - 0.07973989222911573).abs() < 1e-9);
    }

    #[test]
    fn antisymmetry_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(10..200);
            let h = rng.random_range(1..4);
            let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ab = dm_test(&a, &b, h, Loss::Squared).unwrap();
            let ba = dm_test(&b, &a, h, Loss::Squared).unwrap();
            assert!((ab.statistic + ba.statistic).abs() < 1e-12);
            assert!((ab.p_better - ba.p_worse).abs() < 1e-12);
            assert_eq!(ab.p_better + ab.p_worse, 1.0);
            assert!((ab.two_sided_p - 2.0 * ab.p_better.min(ab.p_worse)).abs() < 1e-15);
            let scale = |v: &[f64]| v.iter().map(|x| 3.5 * x).collect::<Vec<_>>();
            let scaled = dm_test(&scale(&a), &scale(&b), h, Loss::Squared).unwrap();
            assert!((scaled.statistic - ab.statistic).abs() < 1e-9);
        }
    }

    #[test]
    fn perfect_forecast_is_significantly_better() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = dm_test(&[0.0; 200], &b, 1, Loss::Squared).unwrap();
        assert!(r.p_better < 0.01);
    }

    #[test]
    fn constant_differential_is_degenerate() {
        let r = dm_test(&[1.0; 10], &[2.0; 10], 1, Loss::Absolute).unwrap();
        assert_eq!(r.outcome, DmOutcome::Degenerate);
        assert_eq!(r.statistic, f64::NEG_INFINITY);
        assert_eq!((r.p_better, r.p_worse), (0.0, 1.0));
        assert!(dm_test(&[1.0, 2.0], &[1.0, 2.0], 2, Loss::Squared).is_err());
    }

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2019, 1, 1).unwrap() + Duration::days(n)
    }

    /// dprice_t = 0.5·dprice_{t−1} + 1.5·x_{t−1} + ε.
    fn arx_panel(n: usize, seed: u64) -> IndicatorPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut price = vec![50.0];
        let mut d_prev = 0.0;
        for t in 1..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            let d = 0.5 * d_prev + 1.5 * (x[t - 1] - 0.5) + 0.2 * e;
            price.push(price[t - 1] + d);
            d_prev = d;
        }
        let dates = (0..n as i64).map(day).collect();
        let raw = IndicatorPanel::from_columns(
            dates,
            price.clone(),
            vec![
                PanelColumn { name: "price".into(), values: price },
                PanelColumn { name: "x".into(), values: x },
            ],
        )
        .unwrap();
        transform_series(&raw, day((n as i64) * 3 / 4), true).unwrap()
    }

    #[test]
    fn linear_backtest_beats_the_mean() {
        let panel = arx_panel(400, 1);
        let lags = LagSelection::fixed(&["dprice", "x"], &[2, 2]).unwrap();
        let train_end = panel.transform.as_ref().unwrap().train_end;
        let reports = backtest(&panel, &lags, &ModelSpec::Arx, "text", train_end, &[1], &BacktestParams::default(), 0).unwrap();
        let r = &reports[0];
        assert!(r.points.iter().all(|p| p.date > train_end));
        let mean = panel.columns[0].values[..panel.train_rows()].iter().sum::<f64>() / panel.train_rows() as f64;
        let naive: Vec<f64> = vec![mean; r.points.len()];
        let y: Vec<f64> = r.points.iter().map(|p| p.actual).collect();
        assert!(r.metrics.rmse < metrics_floored(&naive, &y, 1e-3).unwrap().rmse);
        assert!(r.features.iter().any(|f| f == "x(t-1)"));
        for p in &r.points {
            assert!(p.actual_price > 0.0);
        }
        let recomputed = metrics_floored(&r.points.iter().map(|p| p.predicted).collect::<Vec<_>>(), &y, 1e-3).unwrap();
        assert_eq!(recomputed, r.metrics);
    }

    #[test]
    fn single_row_test_set_and_determinism() {
        let panel = arx_panel(120, 2);
        let lags = LagSelection::fixed(&["dprice", "x"], &[1, 1]).unwrap();
        let last = *panel.dates.last().unwrap();
        let spec = ModelSpec::Tree(TreeParams { max_depth: Some(3), ..Default::default() });
        let a = backtest(&panel, &lags, &spec, "text", last - Duration::days(1), &[1, 2], &BacktestParams::default(), 4).unwrap();
        assert_eq!(a[0].points.len(), 1);
        assert_eq!(a.iter().map(|r| r.horizon).collect::<Vec<_>>(), vec![1, 2]);
        let b = backtest(&panel, &lags, &spec, "text", last - Duration::days(1), &[1, 2], &BacktestParams::default(), 4).unwrap();
        assert_eq!(a[0].to_json().unwrap(), b[0].to_json().unwrap());
        assert_eq!(ForecastReport::from_json(&a[1].to_json().unwrap()).unwrap(), a[1]);
        assert!(matches!(
            backtest(&panel, &lags, &spec, "text", last, &[1], &BacktestParams::default(), 4),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn comparison_grid_shapes() {
        let panel = arx_panel(200, 3);
        let lags = LagSelection::fixed(&["dprice", "x"], &[2, 1]).unwrap();
        let train_end = panel.transform.as_ref().unwrap().train_end;
        let params = BacktestParams { skip_rfe: true, ..Default::default() };
        let mut reports = Vec::new();
        for spec in [ModelSpec::Arx, ModelSpec::Tree(TreeParams { max_depth: Some(2), ..Default::default() })] {
            reports.extend(backtest(&panel, &lags, &spec, "text", train_end, &[1, 2], &params, 0).unwrap());
        }
        reports.extend(backtest(&panel, &lags.target_only(), &ModelSpec::Arx, "notext", train_end, &[1, 2], &params, 0).unwrap());

        let rows = compare_models(&reports, "arx-text", &[1, 2], Loss::Squared).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        let direct = dm_test(&reports[0].errors(), &reports[2].errors(), 1, Loss::Squared).unwrap();
        assert_eq!(rows[0].p, direct.p_better);
        assert_eq!(rows[1].p, direct.p_worse);
        assert!(dm_csv(&rows).starts_with("baseline,challenger,h,direction,p\narx-text,tree-text,1,better,"));

        let own = compare_models(&reports[..2], "arx-text", &[1], Loss::Squared).unwrap();
        assert!(own.is_empty());
        let self_test = dm_test(&reports[0].errors(), &reports[0].errors(), 1, Loss::Squared).unwrap();
        assert_eq!(self_test.outcome, DmOutcome::Indistinguishable);
        let csv = results_csv(&reports, false);
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("model,variant,n_features,h,rmse,mae,mape\narx,text,3,1,"));
    }
}
