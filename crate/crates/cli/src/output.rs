use std::fmt::Write as _;

use optport::MarketModel;

use crate::commands::BookRun;
use crate::error::CliResult;

/// One row per (book, objective, option): stock, objective, kind, weight, shares, price.
pub fn weights_csv(market: &MarketModel, runs: &[BookRun]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stock", "objective", "kind", "weight", "shares", "price"])?;
    for run in runs {
        for (objective, sol) in run.solutions() {
            let Ok(sol) = sol else { continue };
            for (m, spec) in run.book.specs.iter().enumerate() {
                w.write_record([
                    market.names[spec.underlying].clone(),
                    objective.to_string(),
                    run.kind.to_string(),
                    sol.w[m].to_string(),
                    sol.x[m].to_string(),
                    run.v[m].to_string(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Human-readable weight table for stdout.
pub fn summary_table(market: &MarketModel, runs: &[BookRun]) -> String {
    let mut s = String::new();
    for run in runs {
        let _ = writeln!(s, "\n{} book", run.kind);
        let _ = writeln!(s, "{:<10} {:>12} {:>12}", "stock", "w_variance", "w_cfvar");
        for (m, spec) in run.book.specs.iter().enumerate() {
            let cell = |r: &Result<optport::PortfolioSolution, String>| match r {
                Ok(sol) => format!("{:>12.6}", sol.w[m]),
                Err(_) => format!("{:>12}", "n/a"),
            };
            let _ = writeln!(
                s,
                "{:<10} {} {}",
                market.names[spec.underlying],
                cell(&run.variance),
                cell(&run.cfvar)
            );
        }
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Grouped bar chart of weights per stock, one panel per book, bars grouped by objective.
pub fn weights_svg(market: &MarketModel, runs: &[BookRun], title: &str) -> String {
    const WIDTH: f64 = 720.0;
    const PANEL: f64 = 280.0;
    const TOP: f64 = 40.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 20.0;
    const COLORS: [(&str, &str); 2] = [("variance", "#4c72b0"), ("cfvar", "#dd8452")];

    let height = TOP + PANEL * runs.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (i, (name, color)) in COLORS.iter().enumerate() {
        let x = WIDTH - 200.0 + 100.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="26" width="10" height="10" fill="{color}"/>"#
        );
        let _ = writeln!(s, r#"<text x="{}" y="35">{name}</text>"#, x + 14.0);
    }

    for (p, run) in runs.iter().enumerate() {
        let top = TOP + PANEL * p as f64 + 20.0;
        let plot_h = PANEL - 60.0;
        let weights: Vec<Option<&Vec<f64>>> = run
            .solutions()
            .map(|(_, r)| r.as_ref().ok().map(|s| &s.w))
            .collect();
        let max_abs = weights
            .iter()
            .flatten()
            .flat_map(|w| w.iter())
            .fold(0.0f64, |a, b| a.max(b.abs()))
            .max(1e-12);
        let ymax = nice_ceiling(max_abs);
        let y_of = |w: f64| top + plot_h / 2.0 - w / ymax * plot_h / 2.0;
        let plot_w = WIDTH - LEFT - RIGHT;

        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="{}" font-size="13">{} options</text>"#,
            top - 6.0,
            run.kind
        );
        for tick in [-ymax, -ymax / 2.0, 0.0, ymax / 2.0, ymax] {
            let y = y_of(tick);
            let stroke = if tick == 0.0 { "#000" } else { "#ddd" };
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{stroke}"/>"#,
                LEFT + plot_w
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                format_tick(tick)
            );
        }
        let groups = run.book.specs.len();
        let group_w = plot_w / groups as f64;
        let bar_w = group_w * 0.35;
        for (m, spec) in run.book.specs.iter().enumerate() {
            let gx = LEFT + group_w * m as f64;
            for (b, w) in weights.iter().enumerate() {
                let Some(w) = w else { continue };
                let x = gx + group_w * 0.15 + bar_w * b as f64;
                let (y0, y1) = (y_of(0.0), y_of(w[m]));
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"><title>{:.6}</title></rect>"#,
                    y0.min(y1),
                    (y1 - y0).abs(),
                    COLORS[b].1,
                    w[m]
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                gx + group_w / 2.0,
                top + plot_h + 18.0,
                escape(&market.names[spec.underlying])
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Smallest 1/2/5 x 10^k at or above `x`.
fn nice_ceiling(x: f64) -> f64 {
    let e = 10f64.powf(x.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * e)
        .find(|v| *v >= x)
        .unwrap_or(10.0 * e)
}

fn format_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_ticks() {
        assert_eq!(nice_ceiling(0.73), 1.0);
        assert_eq!(nice_ceiling(1.3), 2.0);
        assert_eq!(nice_ceiling(3.0), 5.0);
        assert_eq!(format_tick(0.5), "0.5");
        assert_eq!(format_tick(-0.0), "0");
        assert_eq!(format_tick(2.0), "2");
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & c>"), "a&lt;b &amp; c&gt;");
    }
}
