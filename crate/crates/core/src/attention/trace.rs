/// One member of a query's selected expert set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expert {
    /// Key-value pair of token `s`.
    Local(usize),
    /// The shared global expert.
    Global,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryTrace {
    /// Combined score for every candidate token, indexed by token.
    pub candidate_scores: Vec<f64>,
    /// Selected experts; locals in ascending order, then the global expert.
    pub selected: Vec<Expert>,
    /// Gate per selected expert, aligned with `selected`.
    pub gates: Vec<f64>,
}

impl QueryTrace {
    pub fn local_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().filter_map(|e| match e {
            Expert::Local(s) => Some(*s),
            Expert::Global => None,
        })
    }

    /// Smallest margin between a selected local score and the best
    /// rejected one; `None` when every candidate was selected.
    pub fn selection_gap(&self) -> Option<f64> {
        let chosen: Vec<usize> = self.local_indices().collect();
        let worst_in = chosen
            .iter()
            .map(|&s| self.candidate_scores[s])
            .fold(f64::INFINITY, f64::min);
        let best_out = self
            .candidate_scores
            .iter()
            .enumerate()
            .filter(|(s, _)| !chosen.contains(s))
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        best_out.is_finite().then(|| worst_in - best_out)
    }
}

/// Per-query selection diagnostics for one head.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeadTrace {
    pub queries: Vec<QueryTrace>,
}

impl HeadTrace {
    pub fn min_selection_gap(&self) -> Option<f64> {
        self.queries
            .iter()
            .filter_map(QueryTrace::selection_gap)
            .reduce(f64::min)
    }
}

/// Fraction of selected local slots that land on tokens flagged in
/// `token_mask`. `None` when the traces contain no local selections.
pub fn selection_fraction<'a>(
    traces: impl IntoIterator<Item = &'a HeadTrace>,
    token_mask: &[bool],
) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for trace in traces {
        for q in &trace.queries {
            for s in q.local_indices() {
                total += 1;
                if token_mask.get(s).copied().unwrap_or(false) {
                    hits += 1;
                }
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}
