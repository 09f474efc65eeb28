//! Randomized session driving with an independent reference model.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{DateTime, TimeDelta, TimeZone, Utc};
use patchswipe_core::ingest::ContentHash;
use patchswipe_core::model::{ClassLabel, DirectionAction, StudyConfig, StudyMode, SwipeDirection};
use patchswipe_core::session::{DeviceType, NextItem, PatchRef, SessionContext, SessionError, SessionState};
use patchswipe_core::{Dataset, DatasetId, ImageFormat, ImagePatch, ParticipantId, PatchId};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 6, 1, 9, 0, 0).unwrap()
}

pub fn dataset(n: usize) -> Dataset {
    Dataset {
        dataset_id: DatasetId::new("ds"),
        name: "synthetic".into(),
        patches: (0..n)
            .map(|i| {
                let filename = format!("patch_{i:04}.png");
                ImagePatch {
                    patch_id: PatchId::new(format!("pid{i:04}")),
                    content_hash: ContentHash::of(filename.as_bytes()),
                    filename,
                    width: 128,
                    height: 128,
                    format: ImageFormat::Png,
                    ground_truth: Some(ClassLabel::new(if i % 3 == 0 { "atypical" } else { "normal" })),
                }
            })
            .collect(),
        created_at: t0(),
    }
}

pub fn context(n: usize, participant: &str, mode: StudyMode) -> SessionContext {
    let mut config = StudyConfig::new("study", "ds");
    config.mode = mode;
    SessionContext::new(&config, &dataset(n), ParticipantId::new(participant))
}

pub fn context_for(config: &StudyConfig, ds: &Dataset, participant: &str) -> SessionContext {
    SessionContext::new(config, ds, ParticipantId::new(participant))
}

/// Deck model with snapshot-based undo.
#[derive(Clone, Debug, Default)]
pub struct RefModel {
    pub order: Vec<usize>,
    pub cursor: usize,
    pub queue: std::collections::VecDeque<usize>,
    pub terminal: std::collections::BTreeSet<usize>,
    snapshots: Vec<(usize, std::collections::VecDeque<usize>, std::collections::BTreeSet<usize>)>,
}

impl RefModel {
    pub fn new(order: Vec<usize>) -> Self {
        Self {
            order,
            ..Default::default()
        }
    }

    pub fn head(&self) -> Option<usize> {
        if self.cursor < self.order.len() {
            Some(self.order[self.cursor])
        } else {
            self.queue.front().copied()
        }
    }

    fn snapshot(&mut self) {
        self.snapshots
            .push((self.cursor, self.queue.clone(), self.terminal.clone()));
    }

    fn take_head(&mut self) -> usize {
        if self.cursor < self.order.len() {
            self.cursor += 1;
            self.order[self.cursor - 1]
        } else {
            self.queue.pop_front().unwrap()
        }
    }

    pub fn label(&mut self) {
        self.snapshot();
        let p = self.take_head();
        self.terminal.insert(p);
    }

    pub fn postpone(&mut self) {
        self.snapshot();
        let p = self.take_head();
        self.queue.push_back(p);
    }

    pub fn undo(&mut self) -> bool {
        match self.snapshots.pop() {
            Some((c, q, t)) => {
                self.cursor = c;
                self.queue = q;
                self.terminal = t;
                true
            }
            None => false,
        }
    }

    pub fn all_terminal(&self) -> bool {
        self.terminal.len() == self.order.len()
    }
}

pub fn conservation_holds(s: &SessionState) -> bool {
    s.terminal_count() + (s.len() - s.cursor()) + s.postpone_queue().len() == s.len()
}

/// Runs a random label/postpone/undo interleaving, checking the engine
/// against [`RefModel`] and the invariants after every step. Returns the live
/// session.
pub fn random_walk(seed: u64, n: usize, steps: usize, mode: StudyMode) -> Result<SessionState, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let ctx = context(n, &format!("p{seed}"), mode);
    let mut s = SessionState::new(ctx).map_err(|e| e.to_string())?;
    let mut model = RefModel::new(s.order().to_vec());
    let mut clock = t0();

    for step in 0..steps {
        clock += TimeDelta::milliseconds(rng.gen_range(1..4000));
        let roll = rng.gen_range(0..100);
        if roll < 12 {
            match s.undo(clock) {
                Ok(_) => {
                    if !model.undo() {
                        return Err(format!("step {step}: engine undid, model had nothing"));
                    }
                }
                Err(SessionError::NothingToUndo) => {
                    if model.undo() {
                        return Err(format!("step {step}: model undid, engine had nothing"));
                    }
                }
                Err(SessionError::UndoDisabled) if mode == StudyMode::Training => {}
                Err(e) => return Err(format!("step {step}: undo {e}")),
            }
        } else {
            match s.next_item(clock).map_err(|e| e.to_string())? {
                NextItem::Done => {
                    if model.head().is_some() {
                        return Err(format!("step {step}: engine done, model not"));
                    }
                }
                NextItem::Present(p) => {
                    if model.head() != Some(p.patch_index) {
                        return Err(format!(
                            "step {step}: engine presents {}, model expects {:?}",
                            p.patch_index,
                            model.head()
                        ));
                    }
                    if roll < 15 {
                        // presentation abandoned without a decision
                        continue;
                    }
                    clock += TimeDelta::milliseconds(rng.gen_range(0..5000));
                    let dir = match roll {
                        15..=29 => SwipeDirection::Up,
                        30..=34 => SwipeDirection::Down,
                        35..=67 => SwipeDirection::Left,
                        _ => SwipeDirection::Right,
                    };
                    let dur = rng.gen_bool(0.5).then(|| rng.gen_range(-100..5000));
                    match s.submit(dir, clock, dur, DeviceType::Mobile) {
                        Ok(out) => match out.record.action {
                            DirectionAction::Label(_) => model.label(),
                            DirectionAction::Postpone => model.postpone(),
                            DirectionAction::Unassigned => unreachable!(),
                        },
                        Err(SessionError::Unassigned(_)) if dir == SwipeDirection::Down => {}
                        Err(e) => return Err(format!("step {step}: submit {e}")),
                    }
                }
            }
        }
        s.check_invariants()
            .map_err(|e| format!("step {step}: invariant {e}"))?;
        if !conservation_holds(&s) {
            return Err(format!("step {step}: conservation violated"));
        }
        if s.completed() != model.all_terminal() {
            return Err(format!("step {step}: completion disagrees with model"));
        }
        let terminal_from_history: std::collections::BTreeSet<_> = s
            .history()
            .iter()
            .filter(|r| r.is_terminal())
            .map(|r| r.patch_id.clone())
            .collect();
        if (terminal_from_history.len() == n) != s.completed() {
            return Err(format!("step {step}: completed flag disagrees with history"));
        }
    }
    Ok(s)
}

/// Labels chosen per rater, keyed by filename. Rater `r` copies a planted
/// truth with probability `fidelity[r]` and otherwise picks uniformly.
pub struct SyntheticStudy {
    pub config: StudyConfig,
    pub dataset: Dataset,
    pub sessions: BTreeMap<ParticipantId, SessionState>,
    pub intended: BTreeMap<ParticipantId, BTreeMap<String, String>>,
    pub durations: BTreeMap<ParticipantId, Vec<u64>>,
}

pub fn synthetic_study(seed: u64, raters: usize, items: usize, with_noise_ops: bool) -> SyntheticStudy {
    let mut rng = StdRng::seed_from_u64(seed);
    let ds = dataset(items);
    let mut config = StudyConfig::new("study", "ds");
    let truth: Vec<bool> = (0..items).map(|_| rng.gen_bool(0.3)).collect();
    let mut sessions = BTreeMap::new();
    let mut intended = BTreeMap::new();
    let mut durations = BTreeMap::new();

    for r in 0..raters {
        let pid = ParticipantId::new(format!("expert {}", r + 1));
        config.assigned_participants.insert(pid.clone());
        let fidelity = 0.75 + 0.05 * r as f64;
        let mut s = SessionState::new(context_for(&config, &ds, pid.as_str())).unwrap();
        let mut clock = t0();
        let mut chosen = BTreeMap::new();
        let mut terminal_ms: BTreeMap<String, u64> = BTreeMap::new();

        while let NextItem::Present(p) = s.next_item(clock).unwrap() {
            let atypical = if rng.gen_bool(fidelity) {
                truth[p.patch_index]
            } else {
                rng.gen_bool(0.5)
            };
            let dir = if atypical {
                SwipeDirection::Right
            } else {
                SwipeDirection::Left
            };
            let ms: u64 = rng.gen_range(800..4500);
            clock += TimeDelta::milliseconds(ms as i64 + 7);

            if with_noise_ops && p.postpone_count == 0 && rng.gen_bool(0.05) {
                s.submit(SwipeDirection::Up, clock, Some(ms as i64), DeviceType::Mobile)
                    .unwrap();
                continue;
            }
            if with_noise_ops && rng.gen_bool(0.03) {
                // a wrong swipe, immediately taken back
                let wrong = if atypical { SwipeDirection::Left } else { SwipeDirection::Right };
                s.submit(wrong, clock, Some(ms as i64), DeviceType::Mobile).unwrap();
                s.undo(clock).unwrap();
                continue;
            }
            let out = s.submit(dir, clock, Some(ms as i64), DeviceType::Desktop).unwrap();
            chosen.insert(
                p.image_filename.clone(),
                out.record.label().unwrap().to_string(),
            );
            terminal_ms.insert(p.image_filename.clone(), ms);
        }
        assert!(s.completed());
        durations.insert(pid.clone(), terminal_ms.values().copied().collect());
        intended.insert(pid.clone(), chosen);
        sessions.insert(pid, s);
    }

    SyntheticStudy {
        config,
        dataset: ds,
        sessions,
        intended,
        durations,
    }
}

/// Items × raters label table in (filename, participant) order.
pub fn intended_rows(study: &SyntheticStudy) -> Vec<Vec<String>> {
    let files: Vec<&String> = study.intended.values().next().unwrap().keys().collect();
    files
        .iter()
        .map(|f| {
            study
                .intended
                .values()
                .map(|m| m[*f].clone())
                .collect()
        })
        .collect()
}

pub fn patch_refs(n: usize) -> Vec<PatchRef> {
    context(n, "x", StudyMode::Annotation).patches
}
