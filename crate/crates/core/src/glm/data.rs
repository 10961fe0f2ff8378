//! Datasets and response stores.
//!
//! Covariates are always fully available; responses may be fully observed,
//! partially observed (masked), or gated behind a measurement oracle that
//! yields values on demand while counting how many *distinct* rows have been
//! measured. The oracle counter is the accounting device for
//! measurement-constrained runs: computing sampling weights must leave it
//! untouched, and a complete two-stage fit may advance it by at most
//! `r0 + r`.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Response storage with three observation regimes.
#[derive(Debug)]
pub enum ResponseStore {
    /// Every response observed.
    Full(DVector<f64>),
    /// Responses present only where `observed` is true.
    Masked {
        values: DVector<f64>,
        observed: Vec<bool>,
    },
    /// On-demand store that counts distinct measured rows.
    Oracle(OracleStore),
}

/// An on-demand response store. Each first access to a row flips its
/// `measured` flag and increments the monotone counter; repeated access to
/// the same row does not recount. Accounting is atomic, so concurrent
/// replications may share a store without losing counts.
#[derive(Debug)]
pub struct OracleStore {
    values: DVector<f64>,
    /// Rows that exist at all; `None` means every row is available.
    available: Option<Vec<bool>>,
    measured: Vec<AtomicBool>,
    count: AtomicUsize,
}

impl OracleStore {
    pub fn new(values: DVector<f64>, available: Option<Vec<bool>>) -> Self {
        let n = values.len();
        if let Some(a) = &available {
            assert_eq!(a.len(), n, "availability mask length must match values");
        }
        OracleStore {
            values,
            available,
            measured: (0..n).map(|_| AtomicBool::new(false)).collect(),
            count: AtomicUsize::new(0),
        }
    }

    /// Measure row `i`, counting it once.
    pub fn measure(&self, i: usize) -> Result<f64> {
        if let Some(a) = &self.available {
            if !a[i] {
                return Err(Error::MissingResponses { row: i });
            }
        }
        if !self.measured[i].swap(true, Ordering::Relaxed) {
            self.count.fetch_add(1, Ordering::Relaxed);
        }
        Ok(self.values[i])
    }

    /// Number of distinct rows measured so far.
    pub fn measured_count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }

    fn available_count(&self) -> usize {
        match &self.available {
            None => self.values.len(),
            Some(a) => a.iter().filter(|&&b| b).count(),
        }
    }
}

impl Clone for ResponseStore {
    fn clone(&self) -> Self {
        match self {
            ResponseStore::Full(v) => ResponseStore::Full(v.clone()),
            ResponseStore::Masked { values, observed } => ResponseStore::Masked {
                values: values.clone(),
                observed: observed.clone(),
            },
            ResponseStore::Oracle(o) => ResponseStore::Oracle(OracleStore {
                values: o.values.clone(),
                available: o.available.clone(),
                measured: o
                    .measured
                    .iter()
                    .map(|b| AtomicBool::new(b.load(Ordering::Relaxed)))
                    .collect(),
                count: AtomicUsize::new(o.count.load(Ordering::Relaxed)),
            }),
        }
    }
}

/// A design matrix plus a response store.
///
/// The design is shared behind an `Arc`, so re-gating the responses (e.g. one
/// fresh oracle view per benchmarked method) does not copy covariates.
#[derive(Clone, Debug)]
pub struct Dataset {
    x: Arc<DMatrix<f64>>,
    responses: ResponseStore,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, responses: ResponseStore) -> Result<Self> {
        let n = x.nrows();
        let stored = match &responses {
            ResponseStore::Full(v) => v.len(),
            ResponseStore::Masked { values, observed } => {
                if values.len() != observed.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "masked store: {} values vs {} mask entries",
                        values.len(),
                        observed.len()
                    )));
                }
                values.len()
            }
            ResponseStore::Oracle(o) => o.values.len(),
        };
        if stored != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} design rows vs {stored} responses"
            )));
        }
        Ok(Dataset {
            x: Arc::new(x),
            responses,
        })
    }

    /// Fully observed dataset.
    pub fn fully_observed(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Dataset::new(x, ResponseStore::Full(y))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn store(&self) -> &ResponseStore {
        &self.responses
    }

    /// Response of row `i`. On an oracle store this measures the row.
    pub fn response(&self, i: usize) -> Result<f64> {
        match &self.responses {
            ResponseStore::Full(v) => Ok(v[i]),
            ResponseStore::Masked { values, observed } => {
                if observed[i] {
                    Ok(values[i])
                } else {
                    Err(Error::MissingResponses { row: i })
                }
            }
            ResponseStore::Oracle(o) => o.measure(i),
        }
    }

    /// Gather the responses of `indices` (with multiplicity).
    pub fn measure_many(&self, indices: &[usize]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            out[k] = self.response(i)?;
        }
        Ok(out)
    }

    /// All `n` responses; requires every row to be observable. On an oracle
    /// store this measures (and counts) every row.
    pub fn full_responses(&self) -> Result<DVector<f64>> {
        match &self.responses {
            ResponseStore::Full(v) => Ok(v.clone()),
            _ => self.measure_many(&(0..self.n()).collect::<Vec<_>>()),
        }
    }

    /// Distinct rows measured through an oracle store; 0 for ungated stores.
    pub fn responses_measured(&self) -> usize {
        match &self.responses {
            ResponseStore::Oracle(o) => o.measured_count(),
            _ => 0,
        }
    }

    /// Rows whose response exists at all (whether or not yet measured).
    pub fn observed_count(&self) -> usize {
        match &self.responses {
            ResponseStore::Full(v) => v.len(),
            ResponseStore::Masked { observed, .. } => observed.iter().filter(|&&b| b).count(),
            ResponseStore::Oracle(o) => o.available_count(),
        }
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed_count() == self.n()
    }

    /// A view of the same data re-gated behind a fresh oracle store with a
    /// zeroed measurement counter. The design matrix is shared, not copied.
    pub fn fork_oracle(&self) -> Dataset {
        let (values, available) = match &self.responses {
            ResponseStore::Full(v) => (v.clone(), None),
            ResponseStore::Masked { values, observed } => {
                (values.clone(), Some(observed.clone()))
            }
            ResponseStore::Oracle(o) => (o.values.clone(), o.available.clone()),
        };
        Dataset {
            x: Arc::clone(&self.x),
            responses: ResponseStore::Oracle(OracleStore::new(values, available)),
        }
    }
}
