//! F-ary partial-sum trees for multinomial sampling.
//!
//! A draw `u` in `[0, total)` is resolved by descending from the root: at
//! each node the children are scanned left to right and `u` is reduced by
//! every child sum it passes, until a child whose sum exceeds the remainder is
//! found. The result is the minimal `k` with `prefix_sum(k) > u`, so a draw
//! landing exactly on a boundary resolves to the right neighbour and leaves of
//! weight zero are never returned.

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

pub const DEFAULT_FANOUT: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTree<R: Real> {
    fanout: usize,
    // levels[0] are the leaves, the last level holds the root alone.
    levels: Vec<Vec<R>>,
}

/// Nodes visited by one descent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescentTrace {
    /// `(level, node)` from the root down to the chosen leaf.
    pub path: Vec<(usize, usize)>,
    /// Child sums read while scanning.
    pub children_read: usize,
}

impl<R: Real> PrefixTree<R> {
    pub fn build(weights: &[R], fanout: usize) -> Result<Self> {
        let mut tree = PrefixTree {
            fanout,
            levels: Vec::new(),
        };
        tree.rebuild(weights)?;
        Ok(tree)
    }

    /// Refills the tree from `weights`, reusing its buffers.
    pub fn rebuild(&mut self, weights: &[R]) -> Result<()> {
        if self.fanout < 2 {
            return Err(Error::Value(format!("fanout must be at least 2, got {}", self.fanout)));
        }
        if weights.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if let Some(i) = weights.iter().position(|w| !(*w >= R::ZERO)) {
            return Err(Error::Value(format!("weight {i} is negative or NaN: {}", weights[i])));
        }
        if self.levels.is_empty() {
            self.levels.push(Vec::new());
        }
        self.levels[0].clear();
        self.levels[0].extend_from_slice(weights);
        let mut depth = 0;
        while self.levels[depth].len() > 1 {
            let parent_len = self.levels[depth].len().div_ceil(self.fanout);
            if self.levels.len() == depth + 1 {
                self.levels.push(Vec::new());
            }
            let (below, above) = self.levels.split_at_mut(depth + 1);
            let parents = &mut above[0];
            parents.clear();
            parents.extend(below[depth].chunks(self.fanout).map(sum_in_order));
            debug_assert_eq!(parents.len(), parent_len);
            depth += 1;
        }
        self.levels.truncate(depth + 1);
        Ok(())
    }

    pub fn fanout(&self) -> usize {
        self.fanout
    }

    pub fn len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels[0].is_empty()
    }

    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn total(&self) -> R {
        self.levels[self.height()][0]
    }

    pub fn leaves(&self) -> &[R] {
        &self.levels[0]
    }

    /// Node sums of one level; level 0 are the leaves.
    pub fn level(&self, level: usize) -> &[R] {
        &self.levels[level]
    }

    /// Replaces one leaf and refreshes its ancestors.
    pub fn update(&mut self, index: usize, value: R) {
        debug_assert!(value >= R::ZERO);
        self.levels[0][index] = value;
        let mut node = index;
        for level in 1..self.levels.len() {
            node /= self.fanout;
            let start = node * self.fanout;
            let end = (start + self.fanout).min(self.levels[level - 1].len());
            self.levels[level][node] = sum_in_order(&self.levels[level - 1][start..end]);
        }
    }

    fn check_draw(&self, u: R, total: R) -> Result<()> {
        if !(total > R::ZERO) {
            return Err(Error::EmptyDistribution);
        }
        if !(u >= R::ZERO && u < total) {
            return Err(Error::OutOfRange {
                u: u.to_f64(),
                total: total.to_f64(),
            });
        }
        Ok(())
    }

    /// Index of the minimal leaf whose inclusive prefix sum exceeds `u`.
    pub fn sample(&self, u: R) -> Result<usize> {
        self.check_draw(u, self.total())?;
        Ok(self.descend(u, |level, node| self.levels[level][node], &mut None))
    }

    pub fn sample_traced(&self, u: R) -> Result<(usize, DescentTrace)> {
        self.check_draw(u, self.total())?;
        let mut trace = Some(DescentTrace {
            path: vec![(self.height(), 0)],
            children_read: 0,
        });
        let index = self.descend(u, |level, node| self.levels[level][node], &mut trace);
        Ok((index, trace.unwrap()))
    }

    /// Draws `u` uniformly from `[0, total)` and resolves it.
    pub fn sample_total_and_draw<G: Rng + ?Sized>(&self, rng: &mut G) -> Result<(usize, R)> {
        let u = scaled_uniform(rng, self.total());
        Ok((self.sample(u)?, u))
    }

    /// A read-only view in which leaf `index` weighs `value` instead.
    ///
    /// The view recomputes only the sums on the leaf's root path, adding
    /// siblings in the same order as a full build, so no subtraction is
    /// involved in either its total or its descents.
    pub fn with_override(&self, index: usize, value: R) -> OverrideView<'_, R> {
        let mut path_sums = Vec::with_capacity(self.levels.len());
        path_sums.push(value);
        let mut child = index;
        for level in 1..self.levels.len() {
            let node = child / self.fanout;
            let start = node * self.fanout;
            let end = (start + self.fanout).min(self.levels[level - 1].len());
            let mut acc = R::ZERO;
            for c in start..end {
                acc += if c == child {
                    path_sums[level - 1]
                } else {
                    self.levels[level - 1][c]
                };
            }
            path_sums.push(acc);
            child = node;
        }
        OverrideView {
            tree: self,
            index,
            path_sums,
        }
    }

    fn descend(&self, mut u: R, value: impl Fn(usize, usize) -> R, trace: &mut Option<DescentTrace>) -> usize {
        let mut node = 0;
        for level in (0..self.height()).rev() {
            let start = node * self.fanout;
            let end = (start + self.fanout).min(self.levels[level].len());
            let mut chosen = None;
            let mut last_positive = start;
            for c in start..end {
                let v = value(level, c);
                if let Some(t) = trace.as_mut() {
                    t.children_read += 1;
                }
                if v > R::ZERO {
                    last_positive = c;
                }
                if u < v {
                    chosen = Some(c);
                    break;
                }
                u -= v;
            }
            node = match chosen {
                Some(c) => c,
                None => {
                    // Rounding pushed `u` past the last child; land inside it.
                    let v = value(level, last_positive);
                    u = if v > R::ZERO { v.next_down().max_zero() } else { R::ZERO };
                    last_positive
                }
            };
            if let Some(t) = trace.as_mut() {
                t.path.push((level, node));
            }
        }
        node
    }
}

/// See [`PrefixTree::with_override`].
#[derive(Debug, Clone)]
pub struct OverrideView<'a, R: Real> {
    tree: &'a PrefixTree<R>,
    index: usize,
    // path_sums[l] is the overridden sum of the leaf's ancestor at level l.
    path_sums: Vec<R>,
}

impl<R: Real> OverrideView<'_, R> {
    pub fn total(&self) -> R {
        *self.path_sums.last().unwrap()
    }

    pub fn sample(&self, u: R) -> Result<usize> {
        self.tree.check_draw(u, self.total())?;
        let fanout = self.tree.fanout;
        let value = |level: usize, node: usize| {
            let on_path = self.index / fanout.pow(level as u32);
            if node == on_path {
                self.path_sums[level]
            } else {
                self.tree.levels[level][node]
            }
        };
        Ok(self.tree.descend(u, value, &mut None))
    }
}

trait MaxZero {
    fn max_zero(self) -> Self;
}

impl<R: Real> MaxZero for R {
    fn max_zero(self) -> Self {
        if self > R::ZERO {
            self
        } else {
            R::ZERO
        }
    }
}

fn sum_in_order<R: Real>(xs: &[R]) -> R {
    xs.iter().fold(R::ZERO, |acc, &x| acc + x)
}

/// `uniform * total`, kept strictly below `total`.
pub(crate) fn scaled_uniform<R: Real, G: Rng + ?Sized>(rng: &mut G, total: R) -> R {
    let u = R::uniform(rng) * total;
    if u >= total {
        total.next_down()
    } else {
        u
    }
}
