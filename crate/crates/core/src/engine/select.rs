use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grading::LearnerHistory;

use super::{Applicable, Binding, QlcTemplate, TeacherConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub template: &'static QlcTemplate,
    pub binding: Binding,
}

/// Picks up to `config.max_questions` templates, at most one binding each.
///
/// Templates the learner has mastered and templates with zero weight are
/// never picked. The rest are drawn without replacement with probability
/// proportional to the weight of their dimension. Within a template the
/// binding is drawn uniformly from the lowest-ranked candidates.
pub fn select_templates(
    applicable: &[Applicable],
    config: &TeacherConfig,
    history: &LearnerHistory,
    learner_id: &str,
    seed: u64,
) -> Vec<Selected> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(f64, Selected)> = Vec::new();
    for a in applicable {
        let id = a.template.template_id;
        if !config.enabled_templates.contains(&id)
            || history.is_mastered(learner_id, id, config.mastery_threshold)
        {
            continue;
        }
        let Some(best) = a.candidates.iter().map(|c| &c.rank).min() else {
            continue;
        };
        let top: Vec<&Binding> = a
            .candidates
            .iter()
            .filter(|c| &c.rank == best)
            .map(|c| &c.binding)
            .collect();
        // drawn even for zero weights so one weight never shifts other picks
        let binding = (*top.choose(&mut rng).expect("top tier is nonempty")).clone();
        let weight = config.weight(a.template.tag.dimension);
        if weight > 0.0 {
            pool.push((
                weight,
                Selected {
                    template: a.template,
                    binding,
                },
            ));
        }
    }

    let mut chosen = Vec::new();
    while chosen.len() < config.max_questions as usize && !pool.is_empty() {
        let total: f64 = pool.iter().map(|(w, _)| w).sum();
        let mut r = rng.gen::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, (w, _)) in pool.iter().enumerate() {
            if r < *w {
                pick = i;
                break;
            }
            r -= w;
        }
        chosen.push(pool.remove(pick).1);
    }
    chosen
}
