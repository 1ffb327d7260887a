use rand::Rng;

use crate::error::{domain, Result};
use crate::neighbors::GridIndex;

/// Distinct indices into a proposal's point list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalSample {
    ids: Vec<usize>,
}

impl MinimalSample {
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(domain("sample ids must be distinct"));
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// `m` distinct indices drawn uniformly from `0..pool_size`.
pub fn sample_uniform<R: Rng + ?Sized>(pool_size: usize, m: usize, rng: &mut R) -> Result<MinimalSample> {
    if pool_size < m {
        return Err(domain(format!("pool of {pool_size} is smaller than sample size {m}")));
    }
    Ok(MinimalSample {
        ids: rand::seq::index::sample(rng, pool_size, m).into_vec(),
    })
}

/// Draws after which the minimum neighborhood ring grows by one cell.
const RING_GROWTH_PERIOD: usize = 20;

/// Spatially localized sampler over an image grid. The first point is
/// uniform; the rest come from the smallest square ring of cells around it
/// that holds enough points. The minimum ring radius grows with the number
/// of draws, so the sampler becomes uniform in the long run.
#[derive(Debug, Clone)]
pub struct LocalizedSampler {
    index: GridIndex,
    buckets: Vec<Vec<usize>>,
    draws: usize,
}

impl LocalizedSampler {
    pub fn new(index: GridIndex) -> Self {
        let buckets = index.buckets();
        Self {
            index,
            buckets,
            draws: 0,
        }
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, m: usize, rng: &mut R) -> Result<MinimalSample> {
        let n = self.index.len();
        if n < m {
            return Err(domain(format!("pool of {n} is smaller than sample size {m}")));
        }
        if m == 0 {
            return Ok(MinimalSample { ids: Vec::new() });
        }
        let k = self.index.cells_per_axis();
        let min_radius = self.draws / RING_GROWTH_PERIOD;
        self.draws += 1;

        let first = rng.random_range(0..n);
        let (cx, cy) = self.index.cell(first);
        let mut candidates = Vec::new();
        let mut radius = min_radius.min(k);
        loop {
            candidates.clear();
            let (x0, x1) = (cx.saturating_sub(radius), (cx + radius).min(k - 1));
            let (y0, y1) = (cy.saturating_sub(radius), (cy + radius).min(k - 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    candidates.extend(self.buckets[y * k + x].iter().copied().filter(|&i| i != first));
                }
            }
            if candidates.len() >= m - 1 || radius >= k {
                break;
            }
            radius += 1;
        }
        let picks = rand::seq::index::sample(rng, candidates.len(), m - 1);
        let mut ids = Vec::with_capacity(m);
        ids.push(first);
        ids.extend(picks.iter().map(|i| candidates[i]));
        Ok(MinimalSample { ids })
    }
}
