//! Published reference results, shipped as documented targets only.
//!
//! These numbers came from runs against GPT-3.5, Google search and
//! LLaMa2-7B-Chat on dataset splits this repository does not pin, so they are
//! never asserted by tests; reports print them alongside local results for
//! orientation.

/// One published (method, dataset) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCell {
    pub method: &'static str,
    pub dataset: &'static str,
    pub em: Option<f64>,
    pub f1: Option<f64>,
    pub acc: Option<f64>,
}

const fn span(method: &'static str, dataset: &'static str, em: f64, f1: f64) -> ReferenceCell {
    ReferenceCell {
        method,
        dataset,
        em: Some(em),
        f1: Some(f1),
        acc: None,
    }
}

const fn boolean(method: &'static str, dataset: &'static str, acc: f64) -> ReferenceCell {
    ReferenceCell {
        method,
        dataset,
        em: None,
        f1: None,
        acc: Some(acc),
    }
}

/// Reported results for the method rows this artifact can reproduce
/// structurally (full system plus its ablations).
pub const PUBLISHED_REFERENCE: &[ReferenceCell] = &[
    span("No-RAG", "2wiki", 0.135, 0.1282),
    span("No-RAG", "hotpotqa", 0.108, 0.1123),
    boolean("No-RAG", "strategyqa", 0.557),
    span("GPT-Retrieval", "2wiki", 0.172, 0.1685),
    span("GPT-Retrieval", "hotpotqa", 0.241, 0.2427),
    boolean("GPT-Retrieval", "strategyqa", 0.677),
    span("w/o GPT", "2wiki", 0.201, 0.2013),
    span("w/o GPT", "hotpotqa", 0.186, 0.1891),
    boolean("w/o GPT", "strategyqa", 0.764),
    span("w/o Web", "2wiki", 0.254, 0.2518),
    span("w/o Web", "hotpotqa", 0.278, 0.2826),
    boolean("w/o Web", "strategyqa", 0.806),
    span("MSRAG", "2wiki", 0.508, 0.5646),
    span("MSRAG", "hotpotqa", 0.303, 0.3066),
    boolean("MSRAG", "strategyqa", 0.863),
];

/// Render the reference table as Markdown.
pub fn reference_markdown() -> String {
    let mut out = String::new();
    out.push_str(
        "| Method | 2wiki EM | 2wiki F1 | hotpotqa EM | hotpotqa F1 | strategyqa Accuracy |\n",
    );
    out.push_str("|---|---|---|---|---|---|\n");
    for method in ["No-RAG", "GPT-Retrieval", "w/o GPT", "w/o Web", "MSRAG"] {
        out.push_str(&format!("| {method} |"));
        for dataset in ["2wiki", "hotpotqa", "strategyqa"] {
            let cell = PUBLISHED_REFERENCE
                .iter()
                .find(|c| c.method == method && c.dataset == dataset)
                .expect("reference table is complete");
            match (cell.em, cell.f1, cell.acc) {
                (Some(em), Some(f1), None) => out.push_str(&format!(" {em:.3} | {f1:.4} |")),
                (None, None, Some(acc)) => out.push_str(&format!(" {acc:.3} |")),
                _ => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}
