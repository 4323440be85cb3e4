//! The fixed plot document behind the golden SVG.

use austen::{build_plot_data, Band, BiasCurve, CovariateInfluence, CurvePoint, DotInterval, Estimand, Labels, PlotData};

pub fn fixed_plot() -> PlotData {
    let alphas: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
    let points: Vec<CurvePoint> = alphas
        .iter()
        .map(|&alpha| {
            let r2 = 0.08 / alpha;
            CurvePoint {
                alpha,
                r2: r2.min(1.0),
                feasible: r2 <= 1.0,
            }
        })
        .collect();
    let curve = BiasCurve {
        target_bias: 1.5,
        estimand: Estimand::Ate,
        points,
    };
    let band = Band {
        schema_version: 1,
        level: 0.9,
        replicates: 10,
        seed: 0,
        redraws: 0,
        alpha: alphas.clone(),
        r2_lo: curve.points.iter().map(|p| (p.r2 * 0.8).min(1.0)).collect(),
        r2_hi: curve.points.iter().map(|p| (p.r2 * 1.2).min(1.0)).collect(),
        dots: vec![DotInterval {
            group: "income".into(),
            alpha_lo: 0.25,
            alpha_hi: 0.35,
            r2_lo: 0.1,
            r2_hi: 0.2,
        }],
    };
    let dots = vec![
        CovariateInfluence::from_raw("income", 0.3, 0.15),
        CovariateInfluence::from_raw("age & <sex>", 0.3, 0.15),
        CovariateInfluence::from_raw("noise", -0.01, 0.0),
        CovariateInfluence::from_raw("huge", 0.6, 1.3),
    ];
    let labels = Labels::for_curve(&curve);
    build_plot_data(curve, dots, Some(band), labels).unwrap()
}
