//! Forward simulation of level-set Cox process realisations on a lattice.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::grf::{sample_fft_on, Order, SpectralGrid};
use crate::lattice::{CountGrid, FieldRole, Lattice, Margins};
use crate::model::{
    class_probabilities, ClassSpec, ClassificationField, Design, LevelSetSpec, LscpModel, Thresholds,
};

/// Largest log-intensity accepted before a simulation is aborted.
pub const LOG_INTENSITY_LIMIT: f64 = 30.0;

/// Everything drawn in one forward simulation.
#[derive(Debug, Clone)]
pub struct Realization {
    /// `X_0 + μ_0` at cell centres.
    pub level_set: Vec<f64>,
    /// `X_k` at cell centres for field classes, `None` otherwise.
    pub class_fields: Vec<Option<Vec<f64>>>,
    pub gamma: ClassificationField,
    pub log_intensity: Vec<f64>,
    pub counts: CountGrid,
    pub pattern: PointPattern,
}

/// Truncation orders used for the level-set and class fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimOrders {
    pub level_set: Option<Order>,
    pub class: Option<Order>,
}

/// Draw the latent fields, classification, log-intensity, counts and points.
pub fn simulate_realization<R: Rng + ?Sized>(
    model: &LscpModel,
    lattice: &Lattice,
    design: Option<&Design>,
    rng: &mut R,
) -> Result<Realization> {
    simulate_realization_with(model, lattice, design, SimOrders::default(), rng)
}

pub fn simulate_realization_with<R: Rng + ?Sized>(
    model: &LscpModel,
    lattice: &Lattice,
    design: Option<&Design>,
    orders: SimOrders,
    rng: &mut R,
) -> Result<Realization> {
    let latent = simulate_latent(model, lattice, design, orders, rng)?;
    let counts = draw_counts(&latent.log_intensity, lattice, rng)?;
    let pattern = scatter_points(&counts, lattice, rng);
    Ok(Realization {
        level_set: latent.level_set,
        class_fields: latent.class_fields,
        gamma: latent.gamma,
        log_intensity: latent.log_intensity,
        counts,
        pattern,
    })
}

/// Latent part of a realisation: fields, classes and log-intensity.
#[derive(Debug, Clone)]
pub struct Latent {
    pub level_set: Vec<f64>,
    pub class_fields: Vec<Option<Vec<f64>>>,
    pub gamma: ClassificationField,
    pub log_intensity: Vec<f64>,
}

/// Draw the latent fields and classification without counts.
pub fn simulate_latent<R: Rng + ?Sized>(
    model: &LscpModel,
    lattice: &Lattice,
    design: Option<&Design>,
    orders: SimOrders,
    rng: &mut R,
) -> Result<Latent> {
    model.validate()?;
    let n = lattice.len();
    let k = model.n_classes();

    let (level_set, gamma) = if k == 1 {
        (vec![0.0; n], ClassificationField::uniform(n, 0))
    } else {
        let grid = SpectralGrid::new(lattice, FieldRole::LevelSet);
        let order = orders.level_set.unwrap_or_else(|| grid.full_order());
        let x0 = sample_fft_on(&grid, model.level_set.matern(), order, lattice, rng);
        let mu0 = model.level_set.mean.values(n, design)?;
        let v: Vec<f64> = x0.values.iter().zip(&mu0).map(|(x, m)| x + m).collect();
        let gamma = draw_classes(&v, &model.thresholds, model.nugget, rng);
        (v, gamma)
    };

    let class_grid = SpectralGrid::new(lattice, FieldRole::Class);
    let class_order = orders.class.unwrap_or_else(|| class_grid.full_order());
    let mut class_fields = Vec::with_capacity(k);
    let mut surfaces = Vec::with_capacity(k);
    for c in &model.classes {
        let mean = c.mean_values(n, design)?;
        match c {
            ClassSpec::Field { matern, .. } => {
                let f = sample_fft_on(&class_grid, *matern, class_order, lattice, rng);
                surfaces.push(f.values.iter().zip(&mean).map(|(x, m)| x + m).collect::<Vec<_>>());
                class_fields.push(Some(f.values));
            }
            _ => {
                surfaces.push(mean);
                class_fields.push(None);
            }
        }
    }
    let log_intensity: Vec<f64> = gamma
        .gamma
        .iter()
        .enumerate()
        .map(|(j, &g)| surfaces[g as usize][j])
        .collect();
    check_overflow(&log_intensity)?;
    Ok(Latent {
        level_set,
        class_fields,
        gamma,
        log_intensity,
    })
}

fn check_overflow(log_intensity: &[f64]) -> Result<()> {
    if let Some((cell, &max)) = log_intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        if !(max <= LOG_INTENSITY_LIMIT) {
            return Err(Error::Overflow {
                max_log_intensity: max,
                cell,
                limit: LOG_INTENSITY_LIMIT,
            });
        }
    }
    Ok(())
}

/// Draw `Γ_j` from the ordered-probit class probabilities.
pub fn draw_classes<R: Rng + ?Sized>(v: &[f64], thresholds: &Thresholds, nugget: f64, rng: &mut R) -> ClassificationField {
    let probs = class_probabilities(v, thresholds, nugget);
    let gamma = probs
        .iter()
        .map(|p| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, pk) in p.iter().enumerate() {
                acc += pk;
                if u < acc {
                    return k as u8;
                }
            }
            (p.len() - 1) as u8
        })
        .collect();
    ClassificationField { gamma }
}

/// `Y_j ~ Poisson(|D_j| exp(log λ̃_j))`.
pub fn draw_counts<R: Rng + ?Sized>(log_intensity: &[f64], lattice: &Lattice, rng: &mut R) -> Result<CountGrid> {
    check_overflow(log_intensity)?;
    let area = lattice.cell_area();
    let mut grid = CountGrid::zeros(lattice);
    for (c, &l) in grid.counts.iter_mut().zip(log_intensity) {
        let mean = area * l.exp();
        *c = if mean > 0.0 {
            let d = Poisson::new(mean).map_err(|e| Error::Numerical(format!("Poisson mean {mean}: {e}")))?;
            d.sample(rng) as u32
        } else {
            0
        };
    }
    Ok(grid)
}

/// Place `Y_j` points uniformly at random within cell `j`.
pub fn scatter_points<R: Rng + ?Sized>(counts: &CountGrid, lattice: &Lattice, rng: &mut R) -> PointPattern {
    let mut pts = Vec::with_capacity(counts.total() as usize);
    for (j, &c) in counts.counts.iter().enumerate() {
        let (x0, y0, x1, y1) = lattice.cell_bounds(j);
        for _ in 0..c {
            let x = x0 + rng.random::<f64>() * (x1 - x0);
            let y = y0 + rng.random::<f64>() * (y1 - y0);
            pts.push((x, y));
        }
    }
    PointPattern::new(*lattice.window(), pts)
}

/// Names accepted by [`preset_examples`].
pub const PRESETS: [&str; 4] = ["two-random", "zero-inflated", "two-constant", "boundary-layer"];

/// The four illustrative unit-square models: two random classes, a random
/// class beside a constant low-intensity class, two constant classes, and
/// a random interface layer between two constant classes.
pub fn preset_examples(name: &str) -> Result<LscpModel> {
    let level_set = LevelSetSpec::new(0.4, 1.0);
    let c1 = Thresholds::new(vec![0.0])?;
    let class1 = ClassSpec::field(1.0, 0.1, 1.0, 2.0);
    let class2 = ClassSpec::field(1.0, 0.2, 1.0, 0.0);
    match name {
        "two-random" => LscpModel::new(level_set, c1, 0.0, vec![class1, class2]),
        "zero-inflated" => LscpModel::new(level_set, c1, 0.0, vec![class1, ClassSpec::constant(-2.0)]),
        "two-constant" => LscpModel::new(
            level_set,
            c1,
            0.0,
            vec![ClassSpec::constant(2.0), ClassSpec::constant(0.0)],
        ),
        "boundary-layer" => LscpModel::new(
            level_set,
            Thresholds::new(vec![-0.25, 0.25])?,
            0.0,
            vec![
                ClassSpec::constant(0.0),
                ClassSpec::field(1.0, 0.1, 1.0, 2.0),
                ClassSpec::constant(1.0),
            ],
        ),
        other => Err(Error::Usage(format!(
            "unknown preset '{other}'; expected one of {}",
            PRESETS.join(", ")
        ))),
    }
}

/// Unit-square lattice for the presets, with margins covering the largest
/// preset ranges.
pub fn preset_lattice(n: usize) -> Result<Lattice> {
    Lattice::new(
        Window::unit(),
        n,
        n,
        Margins {
            level_set: 0.4,
            class: 0.2,
        },
    )
}
