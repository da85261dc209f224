//! Posterior sample storage, CSV persistence, and pointwise summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{effective_sample_size, mean, quantile_sorted, variance};

/// Parameters of one block, by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub block: String,
    pub names: Vec<String>,
}

/// Thinned posterior draws. Surfaces are stored in single precision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleStore {
    pub nx: usize,
    pub ny: usize,
    pub n_classes: usize,
    pub layout: Vec<BlockLayout>,
    pub iterations: Vec<usize>,
    /// Natural-scale parameters per sample, concatenated in layout order.
    pub params: Vec<Vec<f64>>,
    pub log_intensity: Vec<Vec<f32>>,
    pub gamma: Vec<Vec<u8>>,
    /// Level-set values `X_0 + μ_0`; empty when there is one class.
    pub level_set: Vec<Vec<f32>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreIndex {
    nx: usize,
    ny: usize,
    n_classes: usize,
    n_samples: usize,
    layout: Vec<BlockLayout>,
}

impl SampleStore {
    pub fn new(nx: usize, ny: usize, n_classes: usize, layout: Vec<BlockLayout>) -> Self {
        Self {
            nx,
            ny,
            n_classes,
            layout,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.layout.iter().flat_map(|b| b.names.iter().cloned()).collect()
    }

    /// Trace of a named parameter.
    pub fn trace(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.param_names().iter().position(|n| n == name)?;
        Some(self.params.iter().map(|p| p[i]).collect())
    }

    pub fn push(&mut self, iteration: usize, params: Vec<f64>, log_intensity: &[f64], gamma: &[u8], level_set: Option<Vec<f64>>) {
        self.iterations.push(iteration);
        self.params.push(params);
        self.log_intensity.push(log_intensity.iter().map(|&x| x as f32).collect());
        self.gamma.push(gamma.to_vec());
        if let Some(v) = level_set {
            self.level_set.push(v.into_iter().map(|x| x as f32).collect());
        }
    }

    /// Write `store.json`, one `theta_<block>.csv` per block, and one CSV per
    /// surface (rows are samples, columns cells in row-major order).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let index = StoreIndex {
            nx: self.nx,
            ny: self.ny,
            n_classes: self.n_classes,
            n_samples: self.len(),
            layout: self.layout.clone(),
        };
        let p = dir.join("store.json");
        let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::to_writer_pretty(f, &index)?;

        let mut offset = 0;
        for b in &self.layout {
            let p = dir.join(format!("theta_{}.csv", b.block));
            let mut w = csv::Writer::from_path(&p)?;
            let mut header = vec!["iteration".to_string()];
            header.extend(b.names.iter().cloned());
            w.write_record(&header)?;
            for (it, row) in self.iterations.iter().zip(&self.params) {
                let mut rec = vec![it.to_string()];
                rec.extend(row[offset..offset + b.names.len()].iter().map(|x| x.to_string()));
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
            offset += b.names.len();
        }
        write_surface(&dir.join("log_intensity.csv"), &self.iterations, &self.log_intensity)?;
        write_surface(&dir.join("gamma.csv"), &self.iterations, &self.gamma)?;
        if !self.level_set.is_empty() {
            write_surface(&dir.join("level_set.csv"), &self.iterations, &self.level_set)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let p = dir.join("store.json");
        let f = File::open(&p).map_err(|e| Error::io(&p, e))?;
        let index: StoreIndex = serde_json::from_reader(f)?;
        let n = index.n_samples;
        let mut params = vec![Vec::new(); n];
        let mut iterations = Vec::with_capacity(n);
        for (bi, b) in index.layout.iter().enumerate() {
            let p = dir.join(format!("theta_{}.csv", b.block));
            let rows = read_rows::<f64>(&p)?;
            if rows.len() != n {
                return Err(Error::Data(format!("{}: {} rows, expected {n}", p.display(), rows.len())));
            }
            for (i, (it, vals)) in rows.into_iter().enumerate() {
                if vals.len() != b.names.len() {
                    return Err(Error::Parse {
                        path: p.clone(),
                        line: i + 2,
                        msg: format!("{} values for {} parameters", vals.len(), b.names.len()),
                    });
                }
                if bi == 0 {
                    iterations.push(it);
                }
                params[i].extend(vals);
            }
        }
        let surf = |name: &str| -> Result<Vec<(usize, Vec<f32>)>> { read_rows::<f32>(&dir.join(name)) };
        let li = surf("log_intensity.csv")?;
        if iterations.is_empty() {
            iterations = li.iter().map(|r| r.0).collect();
        }
        let gamma = read_rows::<u8>(&dir.join("gamma.csv"))?;
        let level_set = if dir.join("level_set.csv").exists() {
            surf("level_set.csv")?.into_iter().map(|r| r.1).collect()
        } else {
            vec![]
        };
        Ok(Self {
            nx: index.nx,
            ny: index.ny,
            n_classes: index.n_classes,
            layout: index.layout,
            iterations,
            params,
            log_intensity: li.into_iter().map(|r| r.1).collect(),
            gamma: gamma.into_iter().map(|r| r.1).collect(),
            level_set,
        })
    }
}

fn write_surface<T: ToString>(path: &Path, iterations: &[usize], rows: &[Vec<T>]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let ncell = rows.first().map_or(0, |r| r.len());
    let mut header = String::from("iteration");
    for j in 0..ncell {
        header.push_str(&format!(",cell{j}"));
    }
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for (it, r) in iterations.iter().zip(rows) {
        let mut line = it.to_string();
        for x in r {
            line.push(',');
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: std::str::FromStr>(path: &Path) -> Result<Vec<(usize, Vec<T>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg,
        };
        let mut it = rec.iter();
        let iter: usize = it
            .next()
            .ok_or_else(|| bad("empty row".into()))?
            .parse()
            .map_err(|_| bad("bad iteration".into()))?;
        let vals = it
            .map(|s| s.parse::<T>().map_err(|_| bad(format!("bad value '{s}'"))))
            .collect::<Result<Vec<T>>>()?;
        out.push((iter, vals));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: f64,
}

/// Pointwise posterior summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub level: f64,
    pub mean_log_intensity: Vec<f64>,
    /// `P(Γ_j = k | data)`, one raster per class.
    pub class_probabilities: Vec<Vec<f64>>,
    pub level_set_mean: Option<Vec<f64>>,
    pub params: Vec<ParamSummary>,
}

/// Posterior means, class probabilities, and equal-tailed credible
/// intervals at `level`.
pub fn posterior_summaries(store: &SampleStore, level: f64) -> Result<PosteriorSummary> {
    if store.is_empty() {
        return Err(Error::Usage("posterior summaries need at least one stored sample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!("credible level must lie in (0, 1), got {level}")));
    }
    let n = store.len() as f64;
    let ncell = store.log_intensity[0].len();
    let mut mli = vec![0.0; ncell];
    for s in &store.log_intensity {
        for (m, &x) in mli.iter_mut().zip(s) {
            *m += x as f64 / n;
        }
    }
    let mut cp = vec![vec![0.0; ncell]; store.n_classes];
    for g in &store.gamma {
        for (j, &k) in g.iter().enumerate() {
            cp[k as usize][j] += 1.0 / n;
        }
    }
    let level_set_mean = (!store.level_set.is_empty()).then(|| {
        let mut m = vec![0.0; ncell];
        for s in &store.level_set {
            for (a, &x) in m.iter_mut().zip(s) {
                *a += x as f64 / n;
            }
        }
        m
    });
    let alpha = 0.5 * (1.0 - level);
    let params = store
        .param_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let xs: Vec<f64> = store.params.iter().map(|p| p[i]).collect();
            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            ParamSummary {
                name,
                mean: mean(&xs),
                sd: variance(&xs).sqrt(),
                lower: quantile_sorted(&sorted, alpha),
                upper: quantile_sorted(&sorted, 1.0 - alpha),
                ess: effective_sample_size(&xs),
            }
        })
        .collect();
    Ok(PosteriorSummary {
        level,
        mean_log_intensity: mli,
        class_probabilities: cp,
        level_set_mean,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> SampleStore {
        let mut s = SampleStore::new(
            2,
            1,
            2,
            vec![
                BlockLayout {
                    block: "level_set".into(),
                    names: vec!["c1".into(), "nugget".into()],
                },
                BlockLayout {
                    block: "class1".into(),
                    names: vec!["sigma1".into()],
                },
            ],
        );
        s.push(10, vec![0.1, 0.2, 1.5], &[0.5, -1.25], &[0, 1], Some(vec![-0.3, 0.7]));
        s
    }

    #[test]
    fn empty_store_is_a_usage_error() {
        let s = SampleStore::new(1, 1, 1, vec![]);
        assert!(matches!(posterior_summaries(&s, 0.95), Err(Error::Usage(_))));
    }

    #[test]
    fn single_sample_summaries_equal_the_sample() {
        let s = store();
        let p = posterior_summaries(&s, 0.95).unwrap();
        assert_eq!(p.mean_log_intensity, vec![0.5, -1.25]);
        assert_eq!(p.class_probabilities, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let sig = &p.params[2];
        assert_eq!((sig.mean, sig.lower, sig.upper, sig.sd), (1.5, 1.5, 1.5, 0.0));
    }

    #[test]
    fn class_probabilities_sum_to_one() {
        let mut s = store();
        s.push(20, vec![0.0, 0.3, 1.0], &[0.1, 0.2], &[1, 1], Some(vec![0.5, 0.5]));
        s.push(30, vec![0.0, 0.3, 1.0], &[0.1, 0.2], &[0, 1], Some(vec![0.5, 0.5]));
        let p = posterior_summaries(&s, 0.9).unwrap();
        for j in 0..2 {
            let t: f64 = p.class_probabilities.iter().map(|c| c[j]).sum();
            assert!((t - 1.0).abs() < 1e-12);
            assert!(p.class_probabilities.iter().all(|c| (0.0..=1.0).contains(&c[j])));
        }
    }

    #[test]
    fn round_trip_through_csv() {
        let mut s = store();
        s.push(20, vec![0.05, 0.25, 1.25], &[0.125, 0.25], &[1, 1], Some(vec![0.5, 0.75]));
        let dir = tempfile::tempdir().unwrap();
        s.write_dir(dir.path()).unwrap();
        let r = SampleStore::read_dir(dir.path()).unwrap();
        assert_eq!(r, s);
        assert_eq!(r.trace("sigma1").unwrap(), vec![1.5, 1.25]);
    }
}
