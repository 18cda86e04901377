//! The benchmark figures.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::commands::BenchmarkData;
use super::config::BenchmarkConfig;
use super::svg::{diverging, extent, viridis, Axes, Figure, Rgb, PALETTE};
use crate::error::Result;
use crate::metrics::report::observable_histograms;
use crate::metrics::{weighted_kde, ContactMapDiff, Observable};
use crate::types::WeightedFrameSet;

const GT_COLOR: Rgb = PALETTE[0];
const MODEL_COLOR: Rgb = PALETTE[1];
/// Scatter plots keep at most this many points.
const MAX_POINTS: usize = 8000;
const BOX: [f64; 4] = [70.0, 40.0, 420.0, 360.0];

fn stride(n: usize) -> usize {
    n.div_ceil(MAX_POINTS).max(1)
}

/// Writes every figure the data supports and returns their paths.
pub fn write_all(dir: &Path, data: &BenchmarkData, cfg: &BenchmarkConfig) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut save = |name: &str, fig: Option<Figure>| -> Result<()> {
        if let Some(fig) = fig {
            let path = dir.join(name);
            fig.save(&path)?;
            out.push(path);
        }
        Ok(())
    };
    save("tica_contour.svg", tica_contour(data)?)?;
    save("we_iterations.svg", Some(we_iterations(data)))?;
    save(
        "contact_map_diff.svg",
        data.report.metrics.contact_map_diff.as_ref().map(contact_map),
    )?;
    save(
        "distributions.svg",
        Some(distributions(data, cfg.metrics.histogram_bins)?),
    )?;
    save("macrostates.svg", macrostates(data)?)?;
    save("msm_vs_raw.svg", Some(msm_vs_raw(data)?))?;
    Ok(out)
}

/// Free energy `-ln p` (shifted to zero) of a 2D KDE on the grid; the
/// empty tails are capped so contours close.
fn free_energy(points: &DMatrix<f64>, weights: &[f64], xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let flat: Vec<f64> = (0..points.nrows())
        .flat_map(|r| [points[(r, 0)], points[(r, 1)]])
        .collect();
    // evaluate_grid is x-major; contours want rows of constant y.
    let grid = weighted_kde(&flat, 2, weights, None)?.evaluate_grid(&[xs.to_vec(), ys.to_vec()])?;
    let top = grid.iter().cloned().fold(0.0, f64::max);
    let (nx, ny) = (xs.len(), ys.len());
    Ok((0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let v = grid[i * ny + j];
            if v > 0.0 && top > 0.0 {
                (-(v / top).ln()).min(20.0)
            } else {
                20.0
            }
        })
        .collect())
}

fn tica_contour(data: &BenchmarkData) -> Result<Option<Figure>> {
    if data.gt_tics.ncols() < 2 {
        return Ok(None);
    }
    let (gt, model) = (&data.gt_tics, &data.model_tics);
    let xr = extent(gt.column(0).iter().chain(model.column(0).iter()).copied());
    let yr = extent(gt.column(1).iter().chain(model.column(1).iter()).copied());
    let n = 60;
    let step = ((xr.1 - xr.0) / (n - 1) as f64, (yr.1 - yr.0) / (n - 1) as f64);
    let xs: Vec<f64> = (0..n).map(|i| xr.0 + step.0 * i as f64).collect();
    let ys: Vec<f64> = (0..n).map(|j| yr.0 + step.1 * j as f64).collect();
    let levels = [0.5, 1.5, 2.5, 3.5, 4.5];
    let mut fig = Figure::new(560.0, 450.0);
    let p = fig.panel(
        BOX,
        xr,
        yr,
        &Axes {
            title: "TIC 0 / TIC 1 free energy",
            xlabel: "TIC 0",
            ylabel: "TIC 1",
        },
    );
    let uniform = vec![1.0; gt.nrows()];
    fig.contours(
        &p,
        &xs,
        &ys,
        &free_energy(gt, &uniform, &xs, &ys)?,
        &levels,
        GT_COLOR,
        false,
    );
    let fm = free_energy(model, &data.model.weights, &xs, &ys)?;
    fig.contours(&p, &xs, &ys, &fm, &levels, MODEL_COLOR, true);
    fig.legend(&p, &[("reference", GT_COLOR, false), ("WE", MODEL_COLOR, true)]);
    Ok(Some(fig))
}

fn we_iterations(data: &BenchmarkData) -> Figure {
    let walkers: Vec<(u32, &[f64])> = data
        .we
        .iterations
        .iter()
        .flat_map(|it| it.walkers.iter().map(move |w| (it.iteration, w.pcoord.as_slice())))
        .collect();
    let two_d = walkers.first().is_some_and(|w| w.1.len() >= 2);
    let points: Vec<(f64, f64)> = walkers
        .iter()
        .step_by(stride(walkers.len()))
        .map(|(it, p)| if two_d { (p[0], p[1]) } else { (f64::from(*it), p[0]) })
        .collect();
    let last = data.we.iterations.last().map_or(1, |it| it.iteration.max(1));
    let colors: Vec<Rgb> = walkers
        .iter()
        .step_by(stride(walkers.len()))
        .map(|(it, _)| viridis(f64::from(*it) / f64::from(last)))
        .collect();
    let mut fig = Figure::new(580.0, 450.0);
    let (xlabel, ylabel) = if two_d {
        ("TIC 0", "TIC 1")
    } else {
        ("iteration", "TIC 0")
    };
    let p = fig.panel(
        BOX,
        extent(points.iter().map(|p| p.0)),
        extent(points.iter().map(|p| p.1)),
        &Axes {
            title: "WE walkers by iteration",
            xlabel,
            ylabel,
        },
    );
    fig.scatter(&p, &points, &colors, 1.8);
    fig.colorbar(&p, 0.0, f64::from(last), &viridis, "iteration");
    fig
}

fn contact_map(diff: &ContactMapDiff) -> Figure {
    let n = diff.n;
    let scale = diff.max_abs().max(f64::MIN_POSITIVE);
    let colors: Vec<Option<Rgb>> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .map(|(i, j)| Some(diverging(diff.get(i, j) / scale)))
        .collect();
    let mut fig = Figure::new(580.0, 450.0);
    let p = fig.panel(
        BOX,
        (0.0, n as f64),
        (0.0, n as f64),
        &Axes {
            title: "Mean-distance difference (WE - reference)",
            xlabel: "bead",
            ylabel: "bead",
        },
    );
    fig.cells(&p, n, n, &colors);
    fig.colorbar(&p, -scale, scale, &|t| diverging(2.0 * t - 1.0), "A");
    fig
}

fn distributions(data: &BenchmarkData, bins: usize) -> Result<Figure> {
    let hists = observable_histograms(&data.gt, &data.gt_tics, &data.model, &data.model_tics, bins)?;
    let structural = data.gt.n_particles().is_some_and(|n| n >= 4);
    let wanted: &[Observable] = if structural {
        &[
            Observable::Gyration,
            Observable::Bonds,
            Observable::Angles,
            Observable::Dihedrals,
        ]
    } else {
        &[Observable::Tic0, Observable::Tic1, Observable::Tic2, Observable::Tic3]
    };
    let shown: Vec<(Observable, &(_, _))> = wanted
        .iter()
        .filter_map(|o| hists[*o as usize].as_ref().map(|h| (*o, h)))
        .collect();
    let rows = shown.len().div_ceil(2).max(1);
    let mut fig = Figure::new(1000.0, 20.0 + 400.0 * rows as f64);
    for (slot, (o, (hg, hm))) in shown.into_iter().enumerate() {
        let degrees = matches!(o, Observable::Angles | Observable::Dihedrals);
        let factor = if degrees { 180.0 / std::f64::consts::PI } else { 1.0 };
        let edges: Vec<f64> = hg.edges().iter().map(|e| e * factor).collect();
        let dg: Vec<f64> = hg.densities().iter().map(|d| d / factor).collect();
        let dm: Vec<f64> = hm.densities().iter().map(|d| d / factor).collect();
        let top = dg.iter().chain(&dm).cloned().fold(0.0, f64::max);
        let (col, row) = (slot % 2, slot / 2);
        let bbox = [70.0 + 490.0 * col as f64, 40.0 + 400.0 * row as f64, 400.0, 320.0];
        let unit = match o {
            Observable::Angles | Observable::Dihedrals => " (deg)",
            Observable::Bonds | Observable::Gyration => " (A)",
            _ => "",
        };
        let xlabel = format!("{}{unit}", o.label());
        let p = fig.panel(
            bbox,
            (edges[0], edges[edges.len() - 1]),
            (0.0, top.max(f64::MIN_POSITIVE) * 1.05),
            &Axes {
                title: o.label(),
                xlabel: &xlabel,
                ylabel: "density",
            },
        );
        fig.steps(&p, &edges, &dg, GT_COLOR, false);
        fig.steps(&p, &edges, &dm, MODEL_COLOR, true);
        if slot == 0 {
            fig.legend(&p, &[("reference", GT_COLOR, false), ("WE", MODEL_COLOR, true)]);
        }
    }
    Ok(fig)
}

fn macrostates(data: &BenchmarkData) -> Result<Option<Figure>> {
    let Some(model) = &data.macrostates else {
        return Ok(None);
    };
    let tics = &data.model_tics;
    let d = model.n_tics.min(tics.ncols());
    let labels = model.assign(&tics.columns(0, d).into_owned())?;
    let s = stride(labels.len());
    let two_d = tics.ncols() >= 2;
    let points: Vec<(f64, f64)> = (0..labels.len())
        .step_by(s)
        .map(|r| {
            if two_d {
                (tics[(r, 0)], tics[(r, 1)])
            } else {
                (r as f64, tics[(r, 0)])
            }
        })
        .collect();
    let colors: Vec<Rgb> = (0..labels.len())
        .step_by(s)
        .map(|r| PALETTE[labels[r] % PALETTE.len()])
        .collect();
    let mut fig = Figure::new(560.0, 450.0);
    let (xlabel, ylabel) = if two_d { ("TIC 0", "TIC 1") } else { ("frame", "TIC 0") };
    let p = fig.panel(
        BOX,
        extent(points.iter().map(|p| p.0)),
        extent(points.iter().map(|p| p.1)),
        &Axes {
            title: "PCCA+ macrostates",
            xlabel,
            ylabel,
        },
    );
    fig.scatter(&p, &points, &colors, 1.8);
    let names: Vec<String> = (0..model.n_macrostates()).map(|k| format!("state {k}")).collect();
    let entries: Vec<(&str, Rgb, bool)> = names
        .iter()
        .enumerate()
        .map(|(k, n)| (n.as_str(), PALETTE[k % PALETTE.len()], false))
        .collect();
    fig.legend(&p, &entries);
    Ok(Some(fig))
}

fn tic0_density(set: &WeightedFrameSet, tics: &DMatrix<f64>, xs: &[f64]) -> Result<Vec<f64>> {
    let points: Vec<f64> = tics.column(0).iter().copied().collect();
    let kde = weighted_kde(&points, 1, &set.weights, None)?;
    kde.evaluate_grid(&[xs.to_vec()])
}

fn msm_vs_raw(data: &BenchmarkData) -> Result<Figure> {
    let xr = extent(
        data.gt_tics
            .column(0)
            .iter()
            .chain(data.model_tics.column(0).iter())
            .copied(),
    );
    let pad = 0.05 * (xr.1 - xr.0);
    let xs: Vec<f64> = (0..200)
        .map(|i| xr.0 - pad + (xr.1 - xr.0 + 2.0 * pad) * i as f64 / 199.0)
        .collect();
    let mut curves = vec![
        (
            "reference",
            tic0_density(&data.gt, &data.gt_tics, &xs)?,
            GT_COLOR,
            false,
        ),
        (
            "WE raw counts",
            tic0_density(&data.raw, &data.model_tics, &xs)?,
            PALETTE[7],
            true,
        ),
        (
            "WE weights",
            tic0_density(&data.we_weighted, &data.model_tics, &xs)?,
            MODEL_COLOR,
            false,
        ),
    ];
    if let Some(m) = &data.msm_weighted {
        curves.push((
            "MSM reweighted",
            tic0_density(m, &data.model_tics, &xs)?,
            PALETTE[2],
            true,
        ));
    }
    let top = curves.iter().flat_map(|c| c.1.iter()).cloned().fold(0.0, f64::max);
    let mut fig = Figure::new(560.0, 450.0);
    let p = fig.panel(
        BOX,
        (xs[0], xs[xs.len() - 1]),
        (0.0, top.max(f64::MIN_POSITIVE) * 1.05),
        &Axes {
            title: "TIC 0 density: raw vs reweighted",
            xlabel: "TIC 0",
            ylabel: "density",
        },
    );
    for (_, ys, c, dashed) in &curves {
        fig.line(&p, &xs, ys, *c, 1.5, *dashed);
    }
    let entries: Vec<(&str, Rgb, bool)> = curves.iter().map(|c| (c.0, c.2, c.3)).collect();
    fig.legend(&p, &entries);
    Ok(fig)
}
