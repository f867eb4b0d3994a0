use super::instance::{Assignment, AttributionInstance};
use crate::error::Result;

/// Per content, attribute the `quota` candidates with the highest affinity
/// (ties by subscriber id). Contents are handled independently, so a
/// subscriber may be attributed to several contents.
pub fn rank_greedy(instance: &AttributionInstance) -> Result<Assignment> {
    instance.check_feasible()?;
    Ok(Assignment::from_selection(
        instance,
        greedy_selection(instance),
        0.0,
    ))
}

pub(crate) fn greedy_selection(instance: &AttributionInstance) -> Vec<usize> {
    let mut selected = Vec::new();
    for (j, mut members) in instance.by_content().into_iter().enumerate() {
        // candidate index order within a content is subscriber id order
        members.sort_by(|&a, &b| {
            instance.candidates[b]
                .affinity
                .total_cmp(&instance.candidates[a].affinity)
                .then(a.cmp(&b))
        });
        selected.extend(members.into_iter().take(instance.quotas[j] as usize));
    }
    selected.sort_unstable();
    selected
}
