//! CSV writers. Floats are printed in scientific notation with 17
//! significant digits so that values round-trip exactly.

use std::io::Write;

use crate::bsde::{DiscreteValue, ValueSolution};
use crate::coefficients::MarketPath;
use crate::deviation::{DeviationPath, Strategy};
use crate::strategy::OptimalPlan;

pub type CsvResult<T> = std::result::Result<T, csv::Error>;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> CsvResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, X_pre, X, D_pre, D, A, gamma`.
pub fn write_deviation<W: Write>(
    out: W,
    strategy: &Strategy,
    deviation: &DeviationPath,
    market: &MarketPath,
) -> CsvResult<()> {
    let grid = market.grid;
    write_rows(
        out,
        &["t", "X_pre", "X", "D_pre", "D", "A", "gamma"],
        (0..grid.n_points()).map(|k| {
            vec![
                grid.time(k),
                strategy.before(k),
                strategy.values()[k],
                deviation.pre_trade[k],
                deviation.values[k],
                deviation.impact_state[k],
                market.gamma[k],
            ]
        }),
    )
}

/// Columns `t, y, beta_tilde`.
pub fn write_value_solution<W: Write>(out: W, solution: &ValueSolution) -> CsvResult<()> {
    let grid = solution.grid;
    write_rows(
        out,
        &["t", "y", "beta_tilde"],
        (0..grid.n_points()).map(|k| vec![grid.time(k), solution.y[k], solution.beta_tilde[k]]),
    )
}

/// Columns `t, y_h`.
pub fn write_discrete_value<W: Write>(out: W, value: &DiscreteValue) -> CsvResult<()> {
    let grid = value.grid;
    write_rows(
        out,
        &["t", "y_h"],
        (0..grid.n_points()).map(|k| vec![grid.time(k), value.y_h[k]]),
    )
}

/// Columns `t, X_star, D_star, gamma, beta, exp_q`.
pub fn write_plan<W: Write>(out: W, plan: &OptimalPlan) -> CsvResult<()> {
    let grid = plan.grid;
    write_rows(
        out,
        &["t", "X_star", "D_star", "gamma", "beta", "exp_q"],
        (0..grid.n_points()).map(|k| {
            vec![
                grid.time(k),
                plan.x_star.values()[k],
                plan.d_star.values[k],
                plan.gamma[k],
                plan.beta[k],
                plan.exp_q[k],
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::solve_y_ow;
    use crate::coefficients::{CoefficientModel, TimeGrid};

    #[test]
    fn floats_round_trip() {
        for v in [1.0 / 7.0, -2.25, 1e-300, 6.02e23, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn value_solution_csv_layout() {
        let m = CoefficientModel::constant(10.0, 1.0, 0.5, 0.0, 0.0).unwrap();
        let sol = solve_y_ow(&m, &TimeGrid::over(10.0, 4).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_value_solution(&mut buf, &sol).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,y,beta_tilde");
        assert_eq!(lines.len(), 6);
        let last: Vec<f64> = lines[5].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(last, vec![10.0, 0.5, 0.5]);
    }
}
