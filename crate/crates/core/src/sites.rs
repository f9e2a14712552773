//! Occupied-site index with O(1) insert, remove and uniform sampling.

use rand::Rng;

const ABSENT: usize = usize::MAX;

#[derive(Debug, Clone, Default)]
pub(crate) struct SiteIndex {
    list: Vec<usize>,
    pos: Vec<usize>,
}

impl SiteIndex {
    pub fn contains(&self, site: usize) -> bool {
        self.pos.get(site).is_some_and(|&p| p != ABSENT)
    }

    pub fn insert(&mut self, site: usize) {
        if site >= self.pos.len() {
            self.pos.resize((site + 1).max(2 * self.pos.len()), ABSENT);
        }
        if self.pos[site] == ABSENT {
            self.pos[site] = self.list.len();
            self.list.push(site);
        }
    }

    pub fn remove(&mut self, site: usize) {
        if !self.contains(site) {
            return;
        }
        let idx = self.pos[site];
        let last = *self.list.last().expect("non-empty");
        self.list.swap_remove(idx);
        if last != site {
            self.pos[last] = idx;
        }
        self.pos[site] = ABSENT;
    }

    pub fn set(&mut self, site: usize, occupied: bool) {
        if occupied {
            self.insert(site)
        } else {
            self.remove(site)
        }
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.list[rng.gen_range(0..self.list.len())]
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.list.clone();
        v.sort_unstable();
        v
    }
}
