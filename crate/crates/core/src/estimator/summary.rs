//! Plain-text report of a fitted model.

use std::fmt::Write;

use super::se::coefficient_se;
use super::{BicSampleSize, FittedModel};
use crate::fmt::signif;

const DIGITS: i32 = 7;

fn line(out: &mut String, label: &str, value: f64) {
    let _ = writeln!(out, "  {label} =  {}", signif(value, DIGITS));
}

pub fn summarize_fit(model: &FittedModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Number of events =  {}", signif(model.n_events, DIGITS));
    let _ = writeln!(out, "Model specifications:");
    let _ = writeln!(out, "  nu =  {}", model.grid.n_u());
    let _ = writeln!(out, "  ns =  {}", model.grid.n_s());
    let _ = writeln!(out, "  cu =  {}", model.c_u());
    let _ = writeln!(out, "  cs =  {}", model.c_s());
    out.push('\n');
    let _ = writeln!(out, "Optimal smoothing:");
    line(&mut out, "log10(rho_u)", model.log10_rho_u);
    line(&mut out, "log10(rho_s)", model.log10_rho_s);
    line(&mut out, "rho_u", model.rho_u());
    line(&mut out, "rho_s", model.rho_s());
    out.push('\n');

    if !model.beta.is_empty() {
        let se = coefficient_se(model);
        let header = ["beta", "se(beta)", "exp(beta)", "lower .95", "upper .95"];
        let rows: Vec<(String, Vec<String>)> = model
            .covariate_names
            .iter()
            .enumerate()
            .map(|(q, name)| {
                let cells = [model.beta[q], se.se_beta[q], se.hazard_ratio[q], se.hr_lower[q], se.hr_upper[q]]
                    .iter()
                    .map(|v| signif(*v, DIGITS))
                    .collect();
                (name.clone(), cells)
            })
            .collect();
        let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        let widths: Vec<usize> = (0..header.len())
            .map(|k| rows.iter().map(|(_, c)| c[k].len()).chain([header[k].len()]).max().unwrap_or(0))
            .collect();
        let _ = write!(out, "{:name_w$}", "");
        for (h, w) in header.iter().zip(&widths) {
            let _ = write!(out, " {h:>w$}");
        }
        out.push('\n');
        for (name, cells) in &rows {
            let _ = write!(out, "{name:<name_w$}");
            for (c, w) in cells.iter().zip(&widths) {
                let _ = write!(out, " {c:>w$}");
            }
            out.push('\n');
        }
        out.push('\n');
    }

    let _ = writeln!(out, "Model diagnostics:");
    line(&mut out, "AIC", model.aic);
    line(&mut out, "BIC", model.bic);
    line(&mut out, "ED", model.ed);
    let (label, other) = match model.bic_sample_size {
        BicSampleSize::NonzeroCells => ("BIC (n = events)", BicSampleSize::Events),
        BicSampleSize::Events => ("BIC (n = cells)", BicSampleSize::NonzeroCells),
    };
    line(&mut out, label, model.bic_with(other));
    if model.warnings.optimizer_cap_reached {
        let _ = writeln!(out, "Warning: smoothing search stopped at its evaluation cap");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::{bin_records, make_grid, CovariateValue, IndividualRecord};
    use crate::estimator::{fit_at_rho, FitOptions, ModelSpec};

    fn value_of(text: &str, label: &str) -> f64 {
        let prefix = format!("  {label} =  ");
        text.lines()
            .find_map(|l| l.strip_prefix(&prefix))
            .unwrap_or_else(|| panic!("missing {label}"))
            .trim()
            .parse()
            .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 5e-7 * b.abs().max(1e-300)
    }

    fn fitted(with_cov: bool) -> FittedModel {
        let grid = make_grid(0.0, 6.0, 1.0, 0.0, 5.0, 1.0).unwrap();
        let records: Vec<IndividualRecord> = (0..120)
            .map(|i| {
                let u = (i % 6) as f64 + 0.3;
                let s_out = 0.4 + (i * 7 % 45) as f64 / 10.0;
                let g = if i % 3 == 0 { "a" } else { "b" };
                IndividualRecord::new(u, s_out, i % 4 != 0)
                    .with_covariate("group", CovariateValue::Categorical(g.into()))
            })
            .collect();
        let names: Vec<String> = if with_cov { vec!["group".into()] } else { vec![] };
        let binned = bin_records(&records, &grid, with_cov, &names).unwrap();
        let spec = ModelSpec::for_grid(&grid, 3, 3, 3, 2, with_cov).unwrap();
        fit_at_rho(&binned, &spec, 1.0, 0.5, &FitOptions::default()).unwrap()
    }

    #[test]
    fn printed_numbers_round_trip() {
        let m = fitted(true);
        let text = summarize_fit(&m);
        assert!(text.starts_with(&format!("Number of events =  {}\n", m.n_events)));
        assert!(text.contains("  cu =  6\n  cs =  6\n"));
        assert!(close(value_of(&text, "log10(rho_u)"), m.log10_rho_u));
        assert!(close(value_of(&text, "rho_s"), m.rho_s()));
        assert!(close(value_of(&text, "AIC"), m.aic));
        assert!(close(value_of(&text, "BIC"), m.bic));
        assert!(close(value_of(&text, "ED"), m.ed));
        let row = text.lines().find(|l| l.starts_with("group_b")).unwrap();
        let beta: f64 = row.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!(close(beta, m.beta[0]));
    }

    #[test]
    fn covariate_table_omitted_without_covariates() {
        let text = summarize_fit(&fitted(false));
        assert!(!text.contains("se(beta)"));
        assert!(text.contains("Model diagnostics:"));
    }
}
