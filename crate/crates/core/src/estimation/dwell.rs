//! Hour x category dwell models with category-level shrinkage and fallback.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{invalid, Result};
use crate::estimation::gmm::{fit_weighted_em, EmSettings, LogMixture};
use crate::event::StayEvent;
use crate::rng::seeded_rng;
use crate::taxonomy::{Mid10, N_CATEGORIES, N_HOURS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellModel {
    Local { w_eff: f64, mixture: LogMixture },
    Fallback { w_eff: f64 },
}

impl CellModel {
    pub fn w_eff(&self) -> f64 {
        match self {
            CellModel::Local { w_eff, .. } | CellModel::Fallback { w_eff } => *w_eff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CategoryModel {
    Fitted { weight: f64, mixture: LogMixture },
    Fallback { weight: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DwellRepr {
    cells: BTreeMap<String, CellModel>,
    categories: BTreeMap<String, CategoryModel>,
    overall: LogMixture,
}

/// Cell models indexed by `h * 10 + c`, per-category mixtures and an overall
/// mixture. Serialized with cells keyed "h:Category".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DwellRepr", into = "DwellRepr")]
pub struct DwellModel {
    cells: Vec<CellModel>,
    categories: Vec<CategoryModel>,
    overall: LogMixture,
}

impl TryFrom<DwellRepr> for DwellModel {
    type Error = crate::Error;

    fn try_from(r: DwellRepr) -> Result<Self> {
        if r.cells.len() != N_HOURS * N_CATEGORIES || r.categories.len() != N_CATEGORIES {
            return Err(invalid("dwell model must cover 24 x 10 cells and 10 categories"));
        }
        let mut cells = Vec::with_capacity(N_HOURS * N_CATEGORIES);
        for h in 0..N_HOURS {
            for c in Mid10::ALL {
                let key = cell_key(h, c);
                let cell = r
                    .cells
                    .get(&key)
                    .ok_or_else(|| invalid(format!("dwell model lacks cell {key}")))?;
                cells.push(cell.clone());
            }
        }
        let mut categories = Vec::with_capacity(N_CATEGORIES);
        for c in Mid10::ALL {
            let m = r
                .categories
                .get(c.label())
                .ok_or_else(|| invalid(format!("dwell model lacks category {c}")))?;
            categories.push(m.clone());
        }
        Ok(DwellModel {
            cells,
            categories,
            overall: r.overall,
        })
    }
}

impl From<DwellModel> for DwellRepr {
    fn from(m: DwellModel) -> Self {
        let mut cells = BTreeMap::new();
        for (i, cell) in m.cells.into_iter().enumerate() {
            let c = Mid10::from_index(i % N_CATEGORIES).unwrap();
            cells.insert(cell_key(i / N_CATEGORIES, c), cell);
        }
        let categories = m
            .categories
            .into_iter()
            .enumerate()
            .map(|(i, cm)| (Mid10::from_index(i).unwrap().label().to_string(), cm))
            .collect();
        DwellRepr {
            cells,
            categories,
            overall: m.overall,
        }
    }
}

fn cell_key(h: usize, c: Mid10) -> String {
    format!("{h}:{c}")
}

impl DwellModel {
    /// Every cell and category falls back to `overall`.
    pub fn uniform(overall: LogMixture) -> Self {
        DwellModel {
            cells: vec![CellModel::Fallback { w_eff: 0.0 }; N_HOURS * N_CATEGORIES],
            categories: vec![CategoryModel::Fallback { weight: 0.0 }; N_CATEGORIES],
            overall,
        }
    }

    /// One mixture per category, shared by all hours.
    pub fn per_category(mixtures: [LogMixture; N_CATEGORIES]) -> Self {
        let overall = mixtures[0].clone();
        let mut m = Self::uniform(overall);
        m.categories = mixtures
            .into_iter()
            .map(|mixture| CategoryModel::Fitted {
                weight: 0.0,
                mixture,
            })
            .collect();
        m
    }

    pub fn set_cell(&mut self, h: usize, c: Mid10, mixture: LogMixture) {
        self.cells[h * N_CATEGORIES + c.index()] = CellModel::Local { w_eff: 0.0, mixture };
    }

    pub fn cell(&self, h: usize, c: Mid10) -> &CellModel {
        &self.cells[h * N_CATEGORIES + c.index()]
    }

    pub fn category(&self, c: Mid10) -> &CategoryModel {
        &self.categories[c.index()]
    }

    pub fn overall(&self) -> &LogMixture {
        &self.overall
    }

    pub fn category_mixture(&self, c: Mid10) -> &LogMixture {
        match &self.categories[c.index()] {
            CategoryModel::Fitted { mixture, .. } => mixture,
            CategoryModel::Fallback { .. } => &self.overall,
        }
    }

    /// Mixture used to sample a dwell at (h, c): local, else category, else overall.
    pub fn resolve(&self, h: usize, c: Mid10) -> &LogMixture {
        match self.cell(h, c) {
            CellModel::Local { mixture, .. } => mixture,
            CellModel::Fallback { .. } => self.category_mixture(c),
        }
    }

    pub fn w_eff_table(&self) -> [[f64; N_CATEGORIES]; N_HOURS] {
        let mut t = [[0.0; N_CATEGORIES]; N_HOURS];
        for (i, cell) in self.cells.iter().enumerate() {
            t[i / N_CATEGORIES][i % N_CATEGORIES] = cell.w_eff();
        }
        t
    }

    pub fn local_cells(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c, CellModel::Local { .. }))
            .count()
    }
}

struct Fitter<'a> {
    settings: EmSettings,
    resample: Option<u64>,
    cfg: &'a SimConfig,
}

impl Fitter<'_> {
    fn fit(&self, xs: &[f64], ws: &[f64], tag: &str) -> Option<LogMixture> {
        match self.resample {
            None => fit_weighted_em(xs, ws, &self.settings),
            Some(seed) => {
                let total: f64 = ws.iter().sum();
                if !(total > 0.0) {
                    return None;
                }
                let n = total.round().max(1.0) as usize;
                let mut cum = Vec::with_capacity(ws.len());
                let mut acc = 0.0;
                for w in ws {
                    acc += w;
                    cum.push(acc);
                }
                let mut rng = seeded_rng(&[b"dwell-resample", &seed.to_le_bytes(), tag.as_bytes()]);
                let draws: Vec<f64> = (0..n)
                    .map(|_| {
                        let u: f64 = rng.random::<f64>() * acc;
                        let i = cum.partition_point(|c| *c < u).min(xs.len() - 1);
                        xs[i]
                    })
                    .collect();
                fit_weighted_em(&draws, &vec![1.0; n], &self.settings)
            }
        }
    }

    fn threshold(&self) -> f64 {
        self.cfg.dwell_min_effw_hour
    }
}

/// Fits the overall, per-category and per-cell mixtures on log dwell minutes
/// with soft-label weights. A cell is fitted locally when its effective weight
/// reaches `dwell_min_effw_hour`; its parameters are then shrunk toward the
/// category mixture by `dwell_shrink`.
pub fn fit_dwell_models(corpus: &[StayEvent], cfg: &SimConfig) -> Result<DwellModel> {
    if corpus.is_empty() {
        return Err(invalid("dwell fit needs at least one event"));
    }
    let fitter = Fitter {
        settings: EmSettings {
            components: if cfg.use_dwell_mixture { cfg.gmm_components } else { 1 },
            ..EmSettings::default()
        },
        resample: cfg.dwell_fit_resample.then_some(cfg.random_seed),
        cfg,
    };
    let xs: Vec<f64> = corpus.iter().map(|e| e.dwell_min.ln()).collect();
    let overall = fitter
        .fit(&xs, &vec![1.0; xs.len()], "overall")
        .ok_or_else(|| invalid("no positive-weight events for the dwell fit"))?;

    let categories: Vec<CategoryModel> = Mid10::ALL
        .par_iter()
        .map(|&c| {
            let ws: Vec<f64> = corpus.iter().map(|e| e.label.get(c)).collect();
            let weight: f64 = ws.iter().sum();
            if weight >= fitter.threshold() {
                if let Some(mixture) = fitter.fit(&xs, &ws, c.label()) {
                    return CategoryModel::Fitted { weight, mixture };
                }
            }
            CategoryModel::Fallback { weight }
        })
        .collect();

    let mut by_hour: Vec<Vec<usize>> = vec![Vec::new(); N_HOURS];
    for (i, e) in corpus.iter().enumerate() {
        by_hour[e.start_hour()].push(i);
    }
    let mut model = DwellModel {
        cells: Vec::new(),
        categories,
        overall,
    };
    let cells: Vec<CellModel> = (0..N_HOURS * N_CATEGORIES)
        .into_par_iter()
        .map(|i| {
            let (h, c) = (i / N_CATEGORIES, Mid10::from_index(i % N_CATEGORIES).unwrap());
            let (cx, cw): (Vec<f64>, Vec<f64>) = by_hour[h]
                .iter()
                .map(|&j| (xs[j], corpus[j].label.get(c)))
                .filter(|(_, w)| *w > 0.0)
                .unzip();
            let w_eff: f64 = cw.iter().sum();
            if w_eff >= fitter.threshold() {
                let target = model.category_mixture(c);
                if let Some(local) = fitter.fit(&cx, &cw, &cell_key(h, c)) {
                    if let Some(mixture) = local.shrink_toward(target, cfg.dwell_shrink) {
                        return CellModel::Local { w_eff, mixture };
                    }
                }
            }
            CellModel::Fallback { w_eff }
        })
        .collect();
    model.cells = cells;
    Ok(model)
}
