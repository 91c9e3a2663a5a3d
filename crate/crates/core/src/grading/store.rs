use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;

use super::{
    AdjudicatedGrade, GradeSource, GradingError, GradingEvent, GradingRecord, GradingStatus, Score, Triple,
};
use crate::gateway::DefectPlan;
use crate::ingest::Label;
use crate::pipelines::{append_json_line, CaseResult, FinalVerdict, Framework};

type Key = (String, Framework);

#[derive(Debug, Clone, Default, PartialEq)]
struct Slot {
    records: Vec<GradingRecord>,
    settled: Option<AdjudicatedGrade>,
}

impl Slot {
    fn status(&self) -> GradingStatus {
        if self.settled.is_some() {
            return GradingStatus::Adjudicated;
        }
        match self.records.as_slice() {
            [] => GradingStatus::AwaitingFirst,
            [_] => GradingStatus::AwaitingSecond,
            [first, second, ..] if first.triple() == second.triple() => GradingStatus::Agreed,
            _ => GradingStatus::NeedsAdjudication,
        }
    }

    fn final_grade(&self) -> Option<AdjudicatedGrade> {
        if let Some(g) = &self.settled {
            return Some(g.clone());
        }
        match self.records.as_slice() {
            [first, second, ..] if first.triple() == second.triple() => Some(AdjudicatedGrade {
                case_id: first.case_id.clone(),
                framework: first.framework,
                a: first.a,
                r: first.r,
                d: first.d,
                source: GradeSource::Agreement,
                participants: vec![first.rater_id.clone(), second.rater_id.clone()],
            }),
            _ => None,
        }
    }
}

/// Append-only grading log with derived per-(case, framework) state.
#[derive(Debug, Clone, Default)]
pub struct GradingStore {
    slots: BTreeMap<Key, Slot>,
    events: Vec<GradingEvent>,
    known: Option<BTreeSet<Key>>,
    log: Option<PathBuf>,
}

impl GradingStore {
    /// In-memory store accepting grades for any (case, framework).
    pub fn new() -> Self {
        Self::default()
    }

    /// Restricts grading to the given result pairs.
    pub fn with_known(mut self, known: impl IntoIterator<Item = (String, Framework)>) -> Self {
        self.known = Some(known.into_iter().collect());
        self
    }

    /// Opens (or creates on first write) a JSON Lines event log and
    /// replays it.
    pub fn open(path: &Path, known: Option<BTreeSet<(String, Framework)>>) -> Result<Self, GradingError> {
        let mut store = GradingStore {
            known,
            ..Default::default()
        };
        if path.exists() {
            let file = std::fs::File::open(path)?;
            for event in parse_events(std::io::BufReader::new(file))? {
                store.apply(event, false)?;
            }
        }
        store.log = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn events(&self) -> &[GradingEvent] {
        &self.events
    }

    pub fn status(&self, case_id: &str, framework: Framework) -> GradingStatus {
        self.slot(case_id, framework)
            .map(Slot::status)
            .unwrap_or(GradingStatus::AwaitingFirst)
    }

    pub fn records(&self, case_id: &str, framework: Framework) -> &[GradingRecord] {
        self.slot(case_id, framework)
            .map(|s| s.records.as_slice())
            .unwrap_or(&[])
    }

    pub fn final_grade(&self, case_id: &str, framework: Framework) -> Option<AdjudicatedGrade> {
        self.slot(case_id, framework).and_then(Slot::final_grade)
    }

    /// Every settled grade, keyed by (case, framework).
    pub fn final_grades(&self) -> BTreeMap<(String, Framework), AdjudicatedGrade> {
        self.slots
            .iter()
            .filter_map(|(k, s)| s.final_grade().map(|g| (k.clone(), g)))
            .collect()
    }

    fn slot(&self, case_id: &str, framework: Framework) -> Option<&Slot> {
        self.slots.get(&(case_id.to_string(), framework))
    }

    fn check_known(&self, case_id: &str, framework: Framework) -> Result<(), GradingError> {
        match &self.known {
            Some(known) if !known.contains(&(case_id.to_string(), framework)) => Err(GradingError::UnknownCase {
                case_id: case_id.to_string(),
                framework,
            }),
            _ => Ok(()),
        }
    }

    fn validate(&self, event: &GradingEvent) -> Result<(), GradingError> {
        let (case_id, framework) = event.key();
        self.check_known(case_id, framework)?;
        let status = self.status(case_id, framework);
        match event {
            GradingEvent::Grade(record) => {
                record.triple().validate()?;
                if self.records(case_id, framework).iter().any(|r| r.rater_id == record.rater_id) {
                    return Err(GradingError::DuplicateRater {
                        case_id: case_id.to_string(),
                        framework,
                        rater_id: record.rater_id.clone(),
                    });
                }
                if status > GradingStatus::AwaitingSecond {
                    return Err(GradingError::GradingClosed {
                        case_id: case_id.to_string(),
                        framework,
                        status,
                    });
                }
            }
            GradingEvent::Adjudicated(grade) => {
                grade.triple().validate()?;
                match grade.source {
                    GradeSource::Adjudication => {
                        if status != GradingStatus::NeedsAdjudication {
                            return Err(GradingError::NotInDisagreement {
                                case_id: case_id.to_string(),
                                framework,
                                status,
                            });
                        }
                        let distinct: BTreeSet<&String> = grade.participants.iter().collect();
                        if distinct.len() < 2 {
                            return Err(GradingError::TooFewParticipants);
                        }
                    }
                    GradeSource::AutoSimulated => {
                        if status != GradingStatus::AwaitingFirst {
                            return Err(GradingError::GradingClosed {
                                case_id: case_id.to_string(),
                                framework,
                                status,
                            });
                        }
                    }
                    GradeSource::Agreement => {
                        return Err(GradingError::InvalidScore(
                            "agreement grades are derived, not submitted".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, event: GradingEvent, persist: bool) -> Result<GradingStatus, GradingError> {
        self.validate(&event)?;
        if persist {
            if let Some(path) = &self.log {
                append_json_line(path, &event)?;
            }
        }
        let (case_id, framework) = event.key();
        let key = (case_id.to_string(), framework);
        let slot = self.slots.entry(key.clone()).or_default();
        match &event {
            GradingEvent::Grade(record) => slot.records.push(record.clone()),
            GradingEvent::Adjudicated(grade) => slot.settled = Some(grade.clone()),
        }
        self.events.push(event);
        Ok(self.slots[&key].status())
    }

    pub fn submit_grade(&mut self, record: GradingRecord) -> Result<GradingStatus, GradingError> {
        self.apply(GradingEvent::Grade(record), true)
    }

    pub fn adjudicate(
        &mut self,
        case_id: &str,
        framework: Framework,
        triple: Triple,
        participants: Vec<String>,
    ) -> Result<AdjudicatedGrade, GradingError> {
        let grade = AdjudicatedGrade {
            case_id: case_id.to_string(),
            framework,
            a: triple.a,
            r: triple.r,
            d: triple.d,
            source: GradeSource::Adjudication,
            participants,
        };
        self.apply(GradingEvent::Adjudicated(grade.clone()), true)?;
        Ok(grade)
    }

    /// Stores an automatic grade. Returns `false` when the pair already
    /// carries the same automatic grade.
    pub fn record_auto(&mut self, grade: AdjudicatedGrade) -> Result<bool, GradingError> {
        if self.final_grade(&grade.case_id, grade.framework).as_ref() == Some(&grade) {
            return Ok(false);
        }
        self.apply(GradingEvent::Adjudicated(grade), true)?;
        Ok(true)
    }

    /// Writes the events (optionally for one framework) as JSON Lines.
    pub fn export_gradings<W: Write>(&self, mut out: W, framework: Option<Framework>) -> Result<usize, GradingError> {
        let mut count = 0;
        for event in &self.events {
            if framework.is_some_and(|f| f != event.key().1) {
                continue;
            }
            serde_json::to_writer(&mut out, event).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
            count += 1;
        }
        Ok(count)
    }

    /// Validates the whole file against the current state, then applies
    /// it. Nothing is stored if any line is rejected.
    pub fn import_gradings<R: BufRead>(&mut self, input: R) -> Result<usize, GradingError> {
        let events = parse_events(input)?;
        let mut trial = GradingStore {
            slots: self.slots.clone(),
            events: Vec::new(),
            known: self.known.clone(),
            log: None,
        };
        for (idx, event) in events.iter().enumerate() {
            trial.apply(event.clone(), false).map_err(|e| match e {
                GradingError::InvalidScore(message) => GradingError::InvalidScore(format!("event {}: {message}", idx + 1)),
                other => other,
            })?;
        }
        let count = events.len();
        for event in events {
            self.apply(event, true)?;
        }
        Ok(count)
    }

    /// Counts per status over the given pairs.
    pub fn progress<'a>(
        &self,
        pairs: impl IntoIterator<Item = (&'a str, Framework)>,
    ) -> BTreeMap<GradingStatus, usize> {
        let mut counts: BTreeMap<GradingStatus, usize> = GradingStatus::ALL.iter().map(|&s| (s, 0)).collect();
        for (case_id, framework) in pairs {
            *counts.entry(self.status(case_id, framework)).or_default() += 1;
        }
        counts
    }
}

impl PartialEq for GradingStore {
    fn eq(&self, other: &Self) -> bool {
        self.slots == other.slots
    }
}

fn parse_events<R: BufRead>(input: R) -> Result<Vec<GradingEvent>, GradingError> {
    let mut events = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: GradingEvent = serde_json::from_str(&line).map_err(|e| {
            let message = e.to_string();
            if message.contains("invalid score") {
                GradingError::InvalidScore(format!("line {}: {message}", idx + 1))
            } else {
                GradingError::Parse {
                    line: idx + 1,
                    message,
                }
            }
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Rubric grade implied by a synthetic case's defect bookkeeping and the
/// parsed final verdict.
pub fn auto_grade_simulated(
    result: &CaseResult,
    truth: Label,
    plan: Option<&DefectPlan>,
) -> Result<AdjudicatedGrade, GradingError> {
    let plan = plan.ok_or_else(|| GradingError::NotSynthetic(result.case_id.clone()))?;
    let correct = match result.output.final_verdict {
        FinalVerdict::Positive => truth == Label::Abnormal,
        FinalVerdict::Negative => truth == Label::Normal,
        FinalVerdict::Invalid => false,
    };
    Ok(AdjudicatedGrade {
        case_id: result.case_id.clone(),
        framework: result.output.framework,
        a: plan.expected_a(),
        r: plan.expected_r(),
        d: Score::binary(correct),
        source: GradeSource::AutoSimulated,
        participants: Vec::new(),
    })
}

/// A grading record stamped with the current time.
pub(crate) fn new_record(
    case_id: &str,
    framework: Framework,
    rater_id: &str,
    triple: Triple,
    notes: &str,
) -> GradingRecord {
    GradingRecord {
        case_id: case_id.to_string(),
        framework,
        a: triple.a,
        r: triple.r,
        d: triple.d,
        rater_id: rater_id.to_string(),
        notes: notes.to_string(),
        submitted_at: Utc::now(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Score::*;

    const FW: Framework = Framework::Hmvdx;

    fn rec(case: &str, rater: &str, a: Score, r: Score, d: Score) -> GradingRecord {
        new_record(case, FW, rater, Triple::new(a, r, d), "")
    }

    #[test]
    fn agreement_and_disagreement() {
        let mut store = GradingStore::new();
        assert_eq!(store.submit_grade(rec("c1", "r1", One, One, One)).unwrap(), GradingStatus::AwaitingSecond);
        assert_eq!(store.submit_grade(rec("c1", "r2", One, One, One)).unwrap(), GradingStatus::Agreed);
        let g = store.final_grade("c1", FW).unwrap();
        assert_eq!(g.source, GradeSource::Agreement);
        assert_eq!(g.participants, vec!["r1", "r2"]);

        store.submit_grade(rec("c2", "r1", One, One, One)).unwrap();
        assert_eq!(
            store.submit_grade(rec("c2", "r2", One, Half, One)).unwrap(),
            GradingStatus::NeedsAdjudication
        );
        assert!(store.final_grade("c2", FW).is_none());
        assert!(matches!(
            store.submit_grade(rec("c2", "r1", One, One, One)),
            Err(GradingError::DuplicateRater { .. })
        ));
        assert!(matches!(
            store.adjudicate("c2", FW, Triple::new(One, Half, One), vec!["r1".into()]),
            Err(GradingError::TooFewParticipants)
        ));
        let g = store
            .adjudicate("c2", FW, Triple::new(One, Half, One), vec!["r1".into(), "r2".into()])
            .unwrap();
        assert_eq!((g.r, g.source), (Half, GradeSource::Adjudication));
        assert_eq!(store.status("c2", FW), GradingStatus::Adjudicated);
        assert!(matches!(
            store.adjudicate("c1", FW, Triple::new(One, One, One), vec!["a".into(), "b".into()]),
            Err(GradingError::NotInDisagreement { .. })
        ));
    }

    #[test]
    fn unknown_case_and_invalid_d() {
        let mut store = GradingStore::new().with_known([("c1".to_string(), FW)]);
        assert!(matches!(
            store.submit_grade(rec("zz", "r1", One, One, One)),
            Err(GradingError::UnknownCase { .. })
        ));
        assert!(matches!(
            store.submit_grade(rec("c1", "r1", One, One, Half)),
            Err(GradingError::InvalidScore(_))
        ));
        assert!(store.events().is_empty());
    }

    #[test]
    fn third_rater_is_turned_away() {
        let mut store = GradingStore::new();
        store.submit_grade(rec("c1", "r1", One, One, One)).unwrap();
        store.submit_grade(rec("c1", "r2", Half, One, One)).unwrap();
        assert!(matches!(
            store.submit_grade(rec("c1", "r3", One, One, One)),
            Err(GradingError::GradingClosed { .. })
        ));
    }

    /// Every sequence of up to four events over three raters, two triples,
    /// and an adjudication only ever takes permitted forward steps.
    #[test]
    fn status_machine_exhaustive() {
        #[derive(Clone, Copy, Debug)]
        enum Ev {
            Submit(usize, bool),
            Adjudicate(usize),
            Auto,
        }
        let mut alphabet = Vec::new();
        for rater in 0..3 {
            alphabet.push(Ev::Submit(rater, true));
            alphabet.push(Ev::Submit(rater, false));
        }
        alphabet.extend([Ev::Adjudicate(1), Ev::Adjudicate(2), Ev::Auto]);
        let raters = ["r1", "r2", "r3"];
        // Checking every step of each length-4 sequence covers all shorter prefixes.
        let mut sequences: Vec<Vec<Ev>> = vec![vec![]];
        for _ in 0..4 {
            sequences = sequences
                .iter()
                .flat_map(|s| {
                    alphabet.iter().map(move |&ev| {
                        let mut t = s.clone();
                        t.push(ev);
                        t
                    })
                })
                .collect();
        }
        let mut seen = BTreeSet::new();
        for seq in &sequences {
            let mut store = GradingStore::new();
            let mut status = store.status("c", FW);
            for &ev in seq {
                let before_events = store.events().len();
                let outcome = match ev {
                    Ev::Submit(r, good) => {
                        let triple = if good { (One, One, One) } else { (One, Zero, One) };
                        store.submit_grade(rec("c", raters[r], triple.0, triple.1, triple.2)).map(|_| ())
                    }
                    Ev::Adjudicate(n) => store
                        .adjudicate("c", FW, Triple::new(Half, Half, One), raters[..n].iter().map(|s| s.to_string()).collect())
                        .map(|_| ()),
                    Ev::Auto => store
                        .record_auto(AdjudicatedGrade {
                            case_id: "c".into(),
                            framework: FW,
                            a: One,
                            r: One,
                            d: One,
                            source: GradeSource::AutoSimulated,
                            participants: vec![],
                        })
                        .map(|_| ()),
                };
                let next = store.status("c", FW);
                if outcome.is_err() {
                    assert_eq!(store.events().len(), before_events, "{seq:?}");
                    assert_eq!(next, status, "{seq:?}");
                } else if next != status {
                    assert!(status.can_become(next), "{status} -> {next} via {seq:?}");
                    seen.insert((status, next));
                }
                status = next;
            }
        }
        assert_eq!(seen.len(), 5, "{seen:?}");
    }

    #[test]
    fn export_import_round_trip() {
        let mut store = GradingStore::new();
        for i in 0..25 {
            let case = format!("c{i}");
            store.submit_grade(rec(&case, "r1", One, One, One)).unwrap();
            let r = if i % 3 == 0 { Half } else { One };
            store.submit_grade(rec(&case, "r2", One, r, One)).unwrap();
        }
        let mut buf = Vec::new();
        assert_eq!(store.export_gradings(&mut buf, None).unwrap(), 50);
        let mut fresh = GradingStore::new();
        assert_eq!(fresh.import_gradings(buf.as_slice()).unwrap(), 50);
        assert!(fresh == store);
        assert_eq!(fresh.events(), store.events());

        assert_eq!(GradingStore::new().import_gradings(&b""[..]).unwrap(), 0);
        let bad = br#"{"kind":"grade","case_id":"x","framework":"dvdx","a":0.3,"r":1,"d":1,"rater_id":"r","notes":"","submitted_at":"2024-01-01T00:00:00Z"}"#;
        assert!(matches!(
            GradingStore::new().import_gradings(&bad[..]),
            Err(GradingError::InvalidScore(_))
        ));
        // a rejected line leaves the store untouched
        let mut partial = GradingStore::new();
        let mut mixed = buf.clone();
        mixed.extend_from_slice(&buf);
        assert!(partial.import_gradings(mixed.as_slice()).is_err());
        assert!(partial.events().is_empty());
    }

    #[test]
    fn log_replays_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut store = GradingStore::open(&path, None).unwrap();
        store.submit_grade(rec("c1", "r1", One, One, One)).unwrap();
        store.submit_grade(rec("c1", "r2", One, Zero, One)).unwrap();
        store
            .adjudicate("c1", FW, Triple::new(One, Half, One), vec!["r1".into(), "r2".into()])
            .unwrap();
        let reopened = GradingStore::open(&path, None).unwrap();
        assert!(reopened == store);
        assert_eq!(reopened.status("c1", FW), GradingStatus::Adjudicated);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(2).unwrap().contains("\"kind\":\"adjudicated\""));
    }
}
