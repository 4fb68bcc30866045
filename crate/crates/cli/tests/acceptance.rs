//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use crowdstate::classify::{series_to_transitions, ClassifierConfig, Sample};
use crowdstate::stochastic::{walk_rng, walk_with, WeightTable};
use crowdstate::trace::{self, golden_case_study, parse, serialize, StatementKind};
use crowdstate::{
    default_schema, Annotation, Cause, CrowdThread, EngineError, EventRule, ForkSpec, HistoryKind,
    PhaseId, ReactionRule, StateId, ThreadId, ThreadSelector, World,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn tid(n: u32) -> ThreadId {
    ThreadId::new(n).unwrap()
}

fn phase_slot(state: StateId) -> Option<usize> {
    match state.phase() {
        PhaseId::Assembly => Some(0),
        PhaseId::Mode => Some(1),
        PhaseId::Structure => Some(2),
        PhaseId::Dispersal => Some(3),
        PhaseId::Terminal => None,
    }
}

/// Legality of the default schema restated from the phase rules: no self
/// loops, nothing leaves terminal, nothing re-enters Assembly, only
/// Dispersal reaches terminal, everything else is allowed.
fn oracle_legal(from: StateId, to: StateId) -> bool {
    if from == to || from == StateId::Terminal || to.phase() == PhaseId::Assembly {
        return false;
    }
    if to == StateId::Terminal {
        return from.phase() == PhaseId::Dispersal;
    }
    true
}

fn corpus_texts() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/corpus");
    let mut paths: Vec<_> = fs::read_dir(dir)
        .expect("trace corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "crowd"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect()
}

fn golden_fidelity() -> Outcome {
    use StateId::*;
    let replay =
        trace::replay(&golden_case_study(), &default_schema()).map_err(|e| e.to_string())?;
    let world = &replay.world;
    ensure!(
        world.thread_count() == 3,
        "{} threads",
        world.thread_count()
    );
    for id in 1..=3 {
        let t = world.inspect(tid(id)).unwrap();
        ensure!(
            t.current() == Terminal && !t.alive(),
            "thread {id} ends in {}",
            t.current()
        );
    }
    let states = |id| -> Vec<StateId> {
        world
            .inspect(tid(id))
            .unwrap()
            .history()
            .iter()
            .map(|e| e.state)
            .collect()
    };
    let expected: [&[StateId]; 3] = [
        &[
            AssemblyPlanned,
            ModeTransitory,
            MobileLaminar,
            DispersalRoutine,
            Terminal,
        ],
        &[
            AssemblyPlanned,
            ModeSpectator,
            StaticSolid,
            DispersalEscaping,
            Terminal,
        ],
        &[
            AssemblySpontaneous,
            ModeExpressive,
            ModeConflict,
            MobileChaotic,
            DispersalCoerced,
            Terminal,
        ],
    ];
    for (i, want) in expected.iter().enumerate() {
        let got = states(i as u32 + 1);
        ensure!(got == *want, "thread {} order {:?}", i + 1, got);
    }

    let h2 = world.inspect(tid(2)).unwrap().history();
    let reactions: Vec<_> = h2
        .iter()
        .filter(|e| e.kind == HistoryKind::ForcedByReaction)
        .collect();
    ensure!(
        reactions.len() == 1,
        "thread 2 has {} reaction entries",
        reactions.len()
    );
    ensure!(
        reactions[0].state == DispersalEscaping,
        "thread 2 reaction into {}",
        reactions[0].state
    );
    ensure!(
        reactions[0].cause
            == Some(Cause::Reaction {
                thread: tid(3),
                state: ModeConflict
            }),
        "thread 2 reaction cause {:?}",
        reactions[0].cause
    );

    let h3 = world.inspect(tid(3)).unwrap().history();
    let events: Vec<_> = h3
        .iter()
        .filter(|e| e.kind == HistoryKind::ForcedByEvent)
        .collect();
    ensure!(
        events.len() == 1,
        "thread 3 has {} event entries",
        events.len()
    );
    ensure!(
        events[0].state == ModeConflict,
        "thread 3 event into {}",
        events[0].state
    );
    ensure!(
        events[0].cause == Some(Cause::Event("police_cordon".into())),
        "thread 3 event cause {:?}",
        events[0].cause
    );
    for id in 1..=3 {
        let forced = world
            .inspect(tid(id))
            .unwrap()
            .history()
            .iter()
            .filter(|e| {
                matches!(
                    e.kind,
                    HistoryKind::ForcedByEvent | HistoryKind::ForcedByReaction
                )
            })
            .count();
        ensure!(
            forced == usize::from(id != 1),
            "thread {id} forced entries {forced}"
        );
    }
    Ok(())
}

fn oracle_equivalence() -> Outcome {
    let schema = default_schema();
    let assemblies = [
        StateId::AssemblyPhysical,
        StateId::AssemblyPlanned,
        StateId::AssemblySpontaneous,
    ];
    let mut checked = 0usize;
    let mut accepted = 0usize;
    for start in assemblies {
        for len in 0..=4u32 {
            let total = StateId::COUNT.pow(len);
            for code in 0..total {
                let mut rest = Vec::with_capacity(len as usize);
                let mut c = code;
                for _ in 0..len {
                    rest.push(StateId::ALL[c % StateId::COUNT]);
                    c /= StateId::COUNT;
                }
                let mut prev = start;
                let mut oracle = true;
                for &s in &rest {
                    oracle &= oracle_legal(prev, s);
                    prev = s;
                }

                let mut world = World::new(schema.clone());
                let id = world.spawn_thread(start, Annotation::none()).unwrap();
                let engine = rest
                    .iter()
                    .all(|&s| world.apply_transition(id, s, Annotation::none()).is_ok());
                ensure!(
                    engine == oracle,
                    "disagreement on {start} {:?}: engine {engine}",
                    rest
                );
                if engine {
                    let history = world.inspect(id).unwrap().history();
                    ensure!(
                        history.len() == rest.len() + 1,
                        "history length for {:?}",
                        rest
                    );
                    accepted += 1;
                }
                checked += 1;
            }
        }
    }
    ensure!(
        checked == 3 * (1 + 18 + 18 * 18 + 18usize.pow(3) + 18usize.pow(4)),
        "checked {checked}"
    );
    ensure!(accepted > 0, "nothing accepted");
    Ok(())
}

fn stochastic_correctness() -> Outcome {
    let schema = default_schema();
    let table = WeightTable::new(schema.clone());
    let mut counts: BTreeMap<StateId, BTreeMap<StateId, usize>> = BTreeMap::new();
    let mut steps = 0usize;
    let mut seed = 0u64;
    while steps < 100_000 {
        let mut rng = walk_rng(seed);
        let budget = (100_000 - steps).min(1_000);
        let result = walk_with(&table, StateId::AssemblyPlanned, budget, &mut rng)
            .map_err(|e| e.to_string())?;
        for pair in result.states.windows(2) {
            *counts
                .entry(pair[0])
                .or_default()
                .entry(pair[1])
                .or_default() += 1;
        }
        steps += result.steps();
        seed += 1;
    }
    ensure!(steps == 100_000, "ensemble has {steps} steps");

    let mut compared = 0;
    for (from, row) in &counts {
        let visits: usize = row.values().sum();
        if visits < 1000 {
            continue;
        }
        let probs = table.normalize(*from).map_err(|e| e.to_string())?;
        let expected: Vec<StateId> = StateId::ALL
            .into_iter()
            .filter(|&t| oracle_legal(*from, t))
            .collect();
        ensure!(
            probs.iter().map(|p| p.0).collect::<Vec<_>>() == expected,
            "support of {from}"
        );
        for (to, p) in probs {
            let freq = row.get(&to).copied().unwrap_or(0) as f64 / visits as f64;
            ensure!(
                (freq - p).abs() <= 0.01,
                "{from} -> {to}: empirical {freq:.4} vs {p:.4} over {visits} visits"
            );
            compared += 1;
        }
        ensure!(
            row.keys().all(|t| oracle_legal(*from, *t)),
            "illegal step from {from}"
        );
    }
    ensure!(compared > 100, "only {compared} comparisons");

    let mut half = WeightTable::new(schema);
    half.set_default_weight(0.0).unwrap();
    half.set_weight(StateId::ModeSpectator, StateId::ModeConflict, 0.5)
        .unwrap();
    half.set_weight(StateId::ModeSpectator, StateId::DispersalEscaping, 0.5)
        .unwrap();
    let mut rng = walk_rng(1);
    let mut conflict = 0usize;
    const DRAWS: usize = 100_000;
    for _ in 0..DRAWS {
        match half
            .sample_next(StateId::ModeSpectator, &mut rng)
            .map_err(|e| e.to_string())?
        {
            StateId::ModeConflict => conflict += 1,
            StateId::DispersalEscaping => {}
            other => return Err(format!("half table sampled {other}")),
        }
    }
    for freq in [
        conflict as f64 / DRAWS as f64,
        1.0 - conflict as f64 / DRAWS as f64,
    ] {
        ensure!(
            (0.48..=0.52).contains(&freq),
            "half table frequency {freq:.4}"
        );
    }
    Ok(())
}

fn render_histories(world: &World) -> String {
    let mut out = String::new();
    for t in world.threads() {
        out.push_str(&format!("thread {} parent {:?}\n", t.id(), t.parent()));
        for e in t.history() {
            out.push_str(&format!("  {e} {:?}\n", e.kind));
        }
    }
    out
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_crowdstate");
    for (seed, steps) in [("7", "20"), ("0", "1"), ("12345", "500")] {
        let run = || {
            Command::new(exe)
                .args(["simulate", "--seed", seed, "--steps", steps])
                .output()
                .unwrap()
        };
        let (a, b) = (run(), run());
        ensure!(
            a.status.success() && b.status.success(),
            "simulate failed for seed {seed}"
        );
        ensure!(
            !a.stdout.is_empty() && a.stdout == b.stdout,
            "simulate output differs for seed {seed}"
        );

        let mut lib_out = Vec::new();
        let status = crowdstate_cli::run(
            ["crowdstate", "simulate", "--seed", seed, "--steps", steps],
            &mut lib_out,
            &mut Vec::new(),
        );
        ensure!(
            status == crowdstate_cli::ExitStatus::Success,
            "library simulate status"
        );
        ensure!(
            lib_out == a.stdout,
            "library and binary output differ for seed {seed}"
        );
    }

    let mut traces = vec![golden_case_study()];
    traces.extend(corpus_texts().iter().map(|(_, t)| parse(t).unwrap()));
    for t in &traces {
        let a = trace::replay(t, &default_schema()).map_err(|e| e.to_string())?;
        let b = trace::replay(t, &default_schema()).map_err(|e| e.to_string())?;
        ensure!(
            render_histories(&a.world).as_bytes() == render_histories(&b.world).as_bytes(),
            "replay histories differ for {}",
            t.source
        );
        ensure!(a.report == b.report, "replay reports differ");
    }
    Ok(())
}

fn fold_tags(
    start: [Option<StateId>; 4],
    states: impl Iterator<Item = StateId>,
) -> [Option<StateId>; 4] {
    let mut tags = start;
    for s in states {
        if let Some(slot) = phase_slot(s) {
            tags[slot] = Some(s);
        }
    }
    tags
}

fn tag_array(t: &crowdstate::TagSet) -> [Option<StateId>; 4] {
    [
        t.get(PhaseId::Assembly),
        t.get(PhaseId::Mode),
        t.get(PhaseId::Structure),
        t.get(PhaseId::Dispersal),
    ]
}

const EVENTS: [&str; 3] = ["alarm", "cordon", "rain"];

fn random_state(rng: &mut StdRng) -> StateId {
    StateId::ALL[rng.gen_range(0..StateId::COUNT)]
}

fn random_non_assembly(rng: &mut StdRng) -> StateId {
    StateId::ALL[rng.gen_range(3..StateId::COUNT)]
}

fn random_selector(rng: &mut StdRng, threads: u32, others: bool) -> ThreadSelector {
    match rng.gen_range(0..if others { 3 } else { 2 }) {
        0 => ThreadSelector::Thread(tid(rng.gen_range(1..=threads.max(1) + 1))),
        1 => ThreadSelector::All,
        _ => ThreadSelector::Others,
    }
}

fn fuzzed_invariants() -> Outcome {
    let schema = default_schema();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut forced_total = 0usize;
    for case in 0..10_000 {
        let mut world = World::new(schema.clone());
        let mut inherited: BTreeMap<ThreadId, [Option<StateId>; 4]> = BTreeMap::new();
        let ops = rng.gen_range(1..40);
        for _ in 0..ops {
            let before: BTreeMap<ThreadId, CrowdThread> =
                world.threads().map(|t| (t.id(), t.clone())).collect();
            let count = world.thread_count() as u32;
            let alive: Vec<ThreadId> = world
                .threads()
                .filter(|t| t.alive())
                .map(|t| t.id())
                .collect();
            let mut allowed: Vec<ThreadId> = Vec::new();
            let mut forced: Vec<ThreadId> = Vec::new();
            let pick = rng.gen_range(0..100);
            if pick < 15 || alive.is_empty() {
                let a = StateId::ALL[rng.gen_range(0..3)];
                let id = world
                    .spawn_thread(a, Annotation::none())
                    .map_err(|e| e.to_string())?;
                inherited.insert(id, [None; 4]);
                allowed.push(id);
            } else if pick < 60 {
                let id = alive[rng.gen_range(0..alive.len())];
                let from = world.inspect(id).unwrap().current();
                let targets = schema.legal_transitions_from(from);
                let to = if rng.gen_bool(0.9) {
                    targets[rng.gen_range(0..targets.len())]
                } else {
                    random_state(&mut rng)
                };
                allowed.push(id);
                match world.apply_transition(id, to, Annotation::none()) {
                    Ok(applied) => forced.extend(applied.reactions.forced.iter().map(|f| f.thread)),
                    Err(EngineError::CascadeDepthExceeded { report, .. }) => {
                        forced.extend(report.forced.iter().map(|f| f.thread))
                    }
                    Err(EngineError::IllegalTransition { .. }) => {
                        ensure!(
                            !oracle_legal(from, to),
                            "engine rejected legal {from} -> {to}"
                        );
                        allowed.clear();
                    }
                    Err(e) => return Err(format!("case {case}: unexpected {e}")),
                }
            } else if pick < 70 {
                let id = alive[rng.gen_range(0..alive.len())];
                let from = world.inspect(id).unwrap().current();
                if from.phase() == PhaseId::Dispersal {
                    allowed.push(id);
                    match world.apply_transition(id, StateId::Terminal, Annotation::none()) {
                        Ok(applied) => {
                            forced.extend(applied.reactions.forced.iter().map(|f| f.thread))
                        }
                        Err(EngineError::CascadeDepthExceeded { report, .. }) => {
                            forced.extend(report.forced.iter().map(|f| f.thread))
                        }
                        Err(e) => return Err(format!("case {case}: end failed: {e}")),
                    }
                }
            } else if pick < 82 {
                let parent = alive[rng.gen_range(0..alive.len())];
                let spec = ForkSpec {
                    assembly: StateId::ALL[rng.gen_range(0..3)],
                    initial: rng
                        .gen_bool(0.5)
                        .then(|| random_non_assembly(&mut rng))
                        .filter(|s| *s != StateId::Terminal),
                };
                let parent_tags = tag_array(world.inspect(parent).unwrap().tags());
                let child = world
                    .fork_thread(parent, spec, Annotation::none())
                    .map_err(|e| e.to_string())?;
                inherited.insert(child, parent_tags);
                allowed.push(child);
            } else if pick < 92 {
                let name = EVENTS[rng.gen_range(0..EVENTS.len())];
                match world.dispatch_event(name, None) {
                    Ok(report) => forced.extend(report.forced.iter().map(|f| f.thread)),
                    Err(EngineError::CascadeDepthExceeded { report, .. }) => {
                        forced.extend(report.forced.iter().map(|f| f.thread))
                    }
                    Err(e) => return Err(format!("case {case}: dispatch failed: {e}")),
                }
            } else if rng.gen_bool(0.5) {
                let _ = world.register_event_rule(EventRule {
                    event: EVENTS[rng.gen_range(0..EVENTS.len())].to_string(),
                    selector: random_selector(&mut rng, count, false),
                    target: random_non_assembly(&mut rng),
                });
            } else {
                let _ = world.register_reaction_rule(ReactionRule {
                    watched_state: random_non_assembly(&mut rng),
                    watched: random_selector(&mut rng, count, false),
                    affected: random_selector(&mut rng, count, true),
                    target: random_non_assembly(&mut rng),
                });
            }
            forced_total += forced.len();

            for t in world.threads() {
                let history = t.history();
                match before.get(&t.id()) {
                    Some(old) if !old.alive() => ensure!(
                        old == t,
                        "case {case}: terminated thread {} changed",
                        t.id()
                    ),
                    Some(old) if !allowed.contains(&t.id()) && !forced.contains(&t.id()) => {
                        ensure!(
                            old == t,
                            "case {case}: uninvolved thread {} changed",
                            t.id()
                        )
                    }
                    Some(old) => ensure!(
                        history.starts_with(old.history()),
                        "case {case}: history of {} rewritten",
                        t.id()
                    ),
                    None => ensure!(
                        allowed.contains(&t.id()),
                        "case {case}: unexpected new thread {}",
                        t.id()
                    ),
                }
                let terminal_at = history.iter().position(|e| e.state == StateId::Terminal);
                if let Some(k) = terminal_at {
                    ensure!(
                        k == history.len() - 1 && !t.alive(),
                        "case {case}: thread {} escaped terminal",
                        t.id()
                    );
                } else {
                    ensure!(
                        t.alive(),
                        "case {case}: thread {} dead without terminal entry",
                        t.id()
                    );
                }
                for pair in history.windows(2) {
                    ensure!(
                        oracle_legal(pair[0].state, pair[1].state),
                        "case {case}: thread {} recorded {} -> {}",
                        t.id(),
                        pair[0].state,
                        pair[1].state
                    );
                }
                let base = inherited[&t.id()];
                ensure!(
                    tag_array(t.inherited_tags()) == base,
                    "case {case}: inherited tags of {}",
                    t.id()
                );
                let want = fold_tags(base, history.iter().map(|e| e.state));
                ensure!(
                    tag_array(t.tags()) == want,
                    "case {case}: tags of {} incoherent",
                    t.id()
                );
                ensure!(
                    t.current() == history.last().unwrap().state,
                    "case {case}: current state of {}",
                    t.id()
                );
            }
        }
    }
    ensure!(
        forced_total > 1000,
        "fuzzing exercised only {forced_total} forced transitions"
    );
    Ok(())
}

fn token_spans(line: &str) -> Vec<(usize, usize)> {
    let b = line.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i] == b' ' {
            i += 1;
            continue;
        }
        let start = i;
        if b[i] == b'"' {
            i += 1;
            while b[i] != b'"' {
                i += if b[i] == b'\\' { 2 } else { 1 };
            }
            i += 1;
        } else {
            while i < b.len() && b[i] != b' ' {
                i += 1;
            }
        }
        spans.push((start, i));
    }
    spans
}

fn parser_round_trip() -> Outcome {
    let corpus = corpus_texts();
    ensure!(corpus.len() >= 20, "corpus has {} traces", corpus.len());
    let mut traces = vec![golden_case_study()];
    for (name, text) in &corpus {
        traces.push(trace::parse_named(text, name).map_err(|e| format!("{name}: {e}"))?);
    }

    let mut forms = [false; 11];
    for t in &traces {
        for s in &t.statements {
            let slot = match &s.kind {
                StatementKind::Assemble { .. } => 0,
                StatementKind::Goto { .. } => 1,
                StatementKind::Fork {
                    assembly: None,
                    initial: None,
                    ..
                } => 2,
                StatementKind::Fork {
                    assembly: Some(_),
                    initial: None,
                    ..
                } => 3,
                StatementKind::Fork {
                    initial: Some(_), ..
                } => 4,
                StatementKind::Event { .. } => 5,
                StatementKind::EventRule { .. } => 6,
                StatementKind::ReactionRule {
                    watched: ThreadSelector::All,
                    ..
                } => 7,
                StatementKind::ReactionRule {
                    affected: ThreadSelector::Others,
                    ..
                } => 8,
                StatementKind::ReactionRule { .. } => 9,
                StatementKind::End { .. } => 10,
            };
            forms[slot] = true;
        }
    }
    ensure!(
        forms.iter().all(|&f| f),
        "statement forms not covered: {:?}",
        forms
    );

    let mut mutations = 0;
    for t in &traces {
        let once = serialize(t);
        let reparsed = parse(&once).map_err(|e| format!("{}: {e}", t.source))?;
        ensure!(
            reparsed.same_structure(t),
            "{}: structure changed",
            t.source
        );
        ensure!(
            serialize(&reparsed) == once,
            "{}: serialization not idempotent",
            t.source
        );

        let lines: Vec<&str> = once.lines().collect();
        for (idx, line) in lines.iter().enumerate() {
            for (start, end) in token_spans(line) {
                let corrupted = [
                    format!("{}%{}", &line[..start], &line[end..]),
                    format!("{}{}", &line[..start], &line[end..])
                        .trim_end()
                        .to_string(),
                ];
                for (k, bad) in corrupted.iter().enumerate() {
                    let mut text = lines.clone();
                    text[idx] = bad;
                    match parse(&text.join("\n")) {
                        Err(e) => ensure!(e.line == idx + 1, "`{bad}` reported on line {}", e.line),
                        // Dropping an optional token can leave a valid line.
                        Ok(_) if k == 1 => continue,
                        Ok(_) => return Err(format!("corruption accepted: `{bad}`")),
                    }
                    mutations += 1;
                }
            }
        }
    }
    ensure!(mutations > 500, "only {mutations} mutations rejected");
    Ok(())
}

fn classifier_hysteresis() -> Outcome {
    let config = ClassifierConfig::default();
    let series = |densities: &[f64]| -> Vec<Sample> {
        densities
            .iter()
            .enumerate()
            .map(|(i, &d)| Sample::new(i.to_string(), d, 0.0, 0.0))
            .collect()
    };
    let flicker = series_to_transitions(&config, &series(&[1.9, 2.1, 1.9, 2.1]))
        .map_err(|e| e.to_string())?;
    ensure!(flicker.len() == 1, "flicker emitted {:?}", flicker);
    ensure!(
        flicker[0].1 == StateId::StaticSparse,
        "flicker state {}",
        flicker[0].1
    );

    let ramp =
        series_to_transitions(&config, &series(&[1.0, 3.0, 5.0])).map_err(|e| e.to_string())?;
    let states: Vec<StateId> = ramp.iter().map(|(_, s)| *s).collect();
    ensure!(
        states
            == [
                StateId::StaticSparse,
                StateId::StaticSolid,
                StateId::StaticCrush
            ],
        "ramp gave {:?}",
        states
    );
    Ok(())
}

fn cascade_guard() -> Outcome {
    const THREADS: u32 = 18;
    let mut world = World::new(default_schema());
    for _ in 0..THREADS {
        world
            .spawn_thread(StateId::AssemblyPlanned, Annotation::none())
            .unwrap();
    }
    for i in 1..=THREADS {
        let next = i % THREADS + 1;
        world
            .register_reaction_rule(ReactionRule {
                watched_state: StateId::ModeConflict,
                watched: ThreadSelector::Thread(tid(i)),
                affected: ThreadSelector::Thread(tid(next)),
                target: StateId::ModeConflict,
            })
            .map_err(|e| e.to_string())?;
    }
    ensure!(
        world.rules().max_cascade_depth() == 16,
        "default depth {}",
        world.rules().max_cascade_depth()
    );

    // Threads 2..=18 would be forced one after another: 17 forced states.
    let result = world.apply_transition(tid(1), StateId::ModeConflict, Annotation::none());
    let report = match result {
        Err(EngineError::CascadeDepthExceeded { limit, report }) => {
            ensure!(limit == 16, "limit {limit}");
            report
        }
        Err(e) => return Err(format!("wrong error: {e}")),
        Ok(_) => return Err("17-level cascade was accepted".into()),
    };
    ensure!(report.truncated, "report not marked truncated");
    ensure!(
        report.forced.len() == 16,
        "{} forced before the guard",
        report.forced.len()
    );
    for (k, f) in report.forced.iter().enumerate() {
        ensure!(
            f.thread == tid(k as u32 + 2) && f.depth == k + 1,
            "forced #{k}: {:?}",
            f
        );
    }

    let mut expected = World::new(default_schema());
    for _ in 0..THREADS {
        expected
            .spawn_thread(StateId::AssemblyPlanned, Annotation::none())
            .unwrap();
    }
    for id in 1..=THREADS {
        let t = world.inspect(tid(id)).unwrap();
        let want = if id <= 17 {
            StateId::ModeConflict
        } else {
            StateId::AssemblyPlanned
        };
        ensure!(t.current() == want, "thread {id} is in {}", t.current());
        ensure!(
            t.history().len() == if id <= 17 { 2 } else { 1 },
            "thread {id} history length"
        );
        if (2..=17).contains(&id) {
            let last = t.history().last().unwrap();
            ensure!(
                last.kind == HistoryKind::ForcedByReaction,
                "thread {id} kind {:?}",
                last.kind
            );
            ensure!(
                last.cause
                    == Some(Cause::Reaction {
                        thread: tid(id - 1),
                        state: StateId::ModeConflict
                    }),
                "thread {id} cause"
            );
        }
    }
    ensure!(
        world.inspect(tid(18)).unwrap() == expected.inspect(tid(18)).unwrap(),
        "thread 18 touched"
    );

    // The world stays usable after the guard fires.
    world
        .apply_transition(tid(18), StateId::ModeSpectator, Annotation::none())
        .map_err(|e| format!("world unusable after guard: {e}"))?;
    Ok(())
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else {
        "panic".to_string()
    }
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [Criterion; 8] = [
        ("golden case-study fidelity", golden_fidelity, secs(1)),
        ("oracle equivalence", oracle_equivalence, secs(60)),
        ("stochastic correctness", stochastic_correctness, secs(10)),
        ("determinism", determinism, None),
        ("fuzzed invariants", fuzzed_invariants, secs(30)),
        ("parser round-trip", parser_round_trip, None),
        ("classifier hysteresis", classifier_hysteresis, None),
        ("cascade guard", cascade_guard, None),
    ];
    let mut failures = 0;
    for (n, (name, check, budget)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check)
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&*p))));
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|()| match budget {
            Some(budget) if elapsed > budget => {
                Err(format!("took {elapsed:.2?}, budget {budget:?}"))
            }
            _ => Ok(()),
        });
        match outcome {
            Ok(()) => println!("PASS criterion {} ({name}) in {:.2?}", n + 1, elapsed),
            Err(why) => {
                failures += 1;
                println!(
                    "FAIL criterion {} ({name}) in {:.2?}: {why}",
                    n + 1,
                    elapsed
                );
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
