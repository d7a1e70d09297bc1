//! Generators for synthetic inputs: CT phantom, manifests and an
//! annotation skeleton with the reference category distribution.

use serde::Serialize;
use visa_core::eval::{ExpressionCat, StructureCat, TypeCat};
use visa_core::AgentId;

/// Commands per category in the reference dataset (240 in total).
pub struct CategoryBudget {
    pub agent: AgentId,
    pub total: usize,
    pub composite: usize,
    /// explicit, implicit, NLQ
    pub ctype: [usize; 3],
    /// baseline, abbreviation, paraphrase
    pub expression: [usize; 3],
}

pub const REFERENCE_BUDGET: [CategoryBudget; 3] = [
    CategoryBudget { agent: AgentId::Ir, total: 44, composite: 3, ctype: [15, 15, 14], expression: [27, 5, 12] },
    CategoryBudget { agent: AgentId::Iv, total: 81, composite: 5, ctype: [27, 27, 27], expression: [49, 4, 28] },
    CategoryBudget { agent: AgentId::Ar, total: 115, composite: 7, ctype: [38, 38, 39], expression: [69, 6, 40] },
];

/// One record to be annotated; text fields are empty.
#[derive(Debug, Clone, Serialize)]
pub struct SkeletonRecord {
    pub id: String,
    pub agent_gold: &'static str,
    pub raw_text: String,
    pub gold_revised: String,
    pub structure: StructureCat,
    pub ctype: TypeCat,
    pub expression: ExpressionCat,
    pub gold_action: String,
    pub gold_params: serde_json::Value,
}

fn spread<T: Copy>(values: [T; 3], counts: [usize; 3]) -> Vec<T> {
    values.iter().zip(counts).flat_map(|(v, n)| std::iter::repeat_n(*v, n)).collect()
}

/// Empty records whose category counts match [`REFERENCE_BUDGET`].
pub fn dataset_skeleton() -> Vec<SkeletonRecord> {
    let mut out = Vec::new();
    for b in &REFERENCE_BUDGET {
        let types = spread([TypeCat::Explicit, TypeCat::Implicit, TypeCat::Nlq], b.ctype);
        let mut exprs = spread([ExpressionCat::Baseline, ExpressionCat::Abbreviation, ExpressionCat::Paraphrase], b.expression);
        // Interleave expressions over the type blocks.
        exprs = (0..b.total).map(|i| exprs[(i * 7) % b.total]).collect::<Vec<_>>();
        debug_assert_eq!(exprs.len(), b.total);
        for i in 0..b.total {
            out.push(SkeletonRecord {
                id: format!("{}-{:03}", b.agent.short(), i + 1),
                agent_gold: b.agent.short(),
                raw_text: String::new(),
                gold_revised: String::new(),
                structure: if i % (b.total / b.composite) == 0 && i / (b.total / b.composite) < b.composite {
                    StructureCat::Composite
                } else {
                    StructureCat::Single
                },
                ctype: types[i],
                expression: exprs[i],
                gold_action: String::new(),
                gold_params: serde_json::json!({}),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn count<K: Ord>(keys: impl Iterator<Item = K>) -> BTreeMap<K, usize> {
        let mut m = BTreeMap::new();
        for k in keys {
            *m.entry(k).or_default() += 1;
        }
        m
    }

    #[test]
    fn skeleton_matches_the_reference_distribution() {
        let s = dataset_skeleton();
        assert_eq!(s.len(), 240);
        let agents = count(s.iter().map(|r| r.agent_gold));
        assert_eq!(agents, BTreeMap::from([("ar", 115), ("ir", 44), ("iv", 81)]));
        let structure = count(s.iter().map(|r| r.structure.as_str()));
        assert_eq!(structure, BTreeMap::from([("composite", 15), ("single", 225)]));
        let types = count(s.iter().map(|r| r.ctype.as_str()));
        assert_eq!(types.values().copied().collect::<Vec<_>>(), [80, 80, 80]);
        let expr = count(s.iter().map(|r| r.expression.as_str()));
        assert_eq!(expr, BTreeMap::from([("abbreviation", 15), ("baseline", 145), ("paraphrase", 80)]));
        let ids = count(s.iter().map(|r| r.id.as_str()));
        assert!(ids.values().all(|n| *n == 1));
    }
}
