use super::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BagLabel {
    Negative,
    Positive,
}

/// A labeled multiset of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub instances: Vec<Instance>,
    pub label: BagLabel,
    /// Groundtruth beat this bag was built around (positive bags only).
    pub anchor_time: Option<usize>,
}

impl Bag {
    pub fn is_positive(&self) -> bool {
        self.label == BagLabel::Positive
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Index of the groundtruth beat nearest to `t`; ties go to the earlier beat.
fn nearest_beat(gt: &[usize], t: usize) -> usize {
    let j = gt.partition_point(|&b| b < t);
    if j == 0 {
        return 0;
    }
    if j == gt.len() {
        return j - 1;
    }
    if t - gt[j - 1] <= gt[j] - t {
        j - 1
    } else {
        j
    }
}

/// Group per-channel instances into positive bags (the `per_positive` nearest
/// instances of each channel around every groundtruth beat) and negative bags
/// (everything left over, one bag per inter-beat gap).
///
/// Every instance lands in exactly one bag. With no groundtruth, the result is a
/// single negative bag holding all instances.
pub fn build_bags(per_channel: &[Vec<Instance>], gt_beat_times: &[usize], per_positive: usize) -> Vec<Bag> {
    let all: Vec<&Instance> = per_channel.iter().flatten().collect();
    if gt_beat_times.is_empty() {
        if all.is_empty() {
            return Vec::new();
        }
        return vec![Bag {
            instances: all.into_iter().cloned().collect(),
            label: BagLabel::Negative,
            anchor_time: None,
        }];
    }

    let n_beats = gt_beat_times.len();
    // candidates[beat][channel] -> instances whose nearest beat is `beat`
    let mut candidates: Vec<Vec<Vec<&Instance>>> = vec![vec![Vec::new(); per_channel.len()]; n_beats];
    for (ch, insts) in per_channel.iter().enumerate() {
        for inst in insts {
            candidates[nearest_beat(gt_beat_times, inst.peak_index)][ch].push(inst);
        }
    }

    let mut taken = std::collections::HashSet::new();
    let mut bags = Vec::new();
    for (beat, per_ch) in candidates.iter_mut().enumerate() {
        let b = gt_beat_times[beat];
        let mut members = Vec::new();
        for list in per_ch.iter_mut() {
            list.sort_by_key(|inst| (inst.peak_index.abs_diff(b), inst.peak_index));
            for inst in list.iter().take(per_positive) {
                taken.insert((inst.channel_id, inst.peak_index));
                members.push((*inst).clone());
            }
        }
        if !members.is_empty() {
            members.sort_by_key(|i| (i.channel_id, i.peak_index));
            bags.push(Bag {
                instances: members,
                label: BagLabel::Positive,
                anchor_time: Some(b),
            });
        }
    }

    // gap g holds instances with gt[g-1] < peak < gt[g]; gap 0 and gap n_beats are the ends
    let mut gaps: Vec<Vec<Instance>> = vec![Vec::new(); n_beats + 1];
    for inst in all {
        if !taken.contains(&(inst.channel_id, inst.peak_index)) {
            let g = gt_beat_times.partition_point(|&b| b <= inst.peak_index);
            gaps[g].push(inst.clone());
        }
    }
    for mut members in gaps.into_iter().filter(|g| !g.is_empty()) {
        members.sort_by_key(|i| (i.peak_index, i.channel_id));
        bags.push(Bag {
            instances: members,
            label: BagLabel::Negative,
            anchor_time: None,
        });
    }
    bags
}
