//! Target search as a resumable state machine.
//!
//! A [`Session`] emits one comparison query at a time and consumes the
//! answer. Simulated oracles, people answering through the HTTP service
//! and recorded transcripts all drive the same machine.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::gbs::{self, GbsVariant, PairProvenance, PairSet};
use crate::net::{build_rank_net_counted, RankNet};
use crate::oracle::{check_epsilon, Answer, Oracle, QueryLog, RankTable};
use crate::tree::RankNetTree;
use crate::ItemId;

/// Which form of the repetition-factor denominator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepetitionForm {
    /// `(1/2 - ε)²`, which makes each match's failure probability at most
    /// `(ℓ + 1/δ)^-2 / ⌈log2 m⌉` via Hoeffding.
    #[default]
    HalfGap,
    /// `(1 - ε)²`.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub form: RepetitionForm,
}

impl NoiseParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let p = NoiseParams {
            epsilon,
            delta,
            form: RepetitionForm::HalfGap,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Number of games per tournament match at level `level` for a net of
/// `m` members: `2·ln((ℓ + 1/δ)²·⌈log2 m⌉) / gap²`, rounded up to an odd
/// integer. A single-member net needs no games.
pub fn repetition_factor(level: u32, m: usize, params: &NoiseParams) -> u32 {
    if m <= 1 {
        return 0;
    }
    let rounds = (m as f64).log2().ceil();
    let gap = match params.form {
        RepetitionForm::HalfGap => 0.5 - params.epsilon,
        RepetitionForm::Printed => 1.0 - params.epsilon,
    };
    let base = (level as f64 + 1.0 / params.delta).powi(2) * rounds;
    let k = (2.0 * base.ln() / (gap * gap)).ceil().max(1.0) as u32;
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Algorithm {
    /// Builds each net on the fly while descending.
    RankNet,
    /// Walks the precomputed tree.
    Tree,
    /// Walks the tree, picking each level's winner by a repeated-match
    /// tournament.
    Noisy(NoiseParams),
    Gbs {
        variant: GbsVariant,
    },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::RankNet => "ranknet",
            Algorithm::Tree => "tree",
            Algorithm::Noisy(_) => "noisy",
            Algorithm::Gbs {
                variant: GbsVariant::Full,
            } => "gbs",
            Algorithm::Gbs {
                variant: GbsVariant::Fast,
            } => "fgbs",
            Algorithm::Gbs {
                variant: GbsVariant::Sparse,
            } => "sgbs",
        }
    }
}

/// Read-only inputs shared by all sessions on a dataset.
#[derive(Debug, Clone)]
pub struct SearchContext {
    pub table: Arc<RankTable>,
    pub tree: Option<Arc<RankNetTree>>,
    pub same_net_pairs: Option<Arc<PairSet>>,
}

impl SearchContext {
    pub fn new(table: RankTable) -> Self {
        SearchContext {
            table: Arc::new(table),
            tree: None,
            same_net_pairs: None,
        }
    }

    /// Also builds the rank-net tree and its same-net pair set.
    pub fn with_tree(table: RankTable) -> Result<Self> {
        let tree = RankNetTree::build(&table)?;
        Ok(Self::from_parts(table, tree))
    }

    pub fn from_parts(table: RankTable, tree: RankNetTree) -> Self {
        let pairs = PairSet::explicit(PairProvenance::SameNet, tree.same_net_pairs());
        SearchContext {
            table: Arc::new(table),
            tree: Some(Arc::new(tree)),
            same_net_pairs: Some(Arc::new(pairs)),
        }
    }

    fn tree(&self) -> Result<Arc<RankNetTree>> {
        self.tree
            .clone()
            .ok_or_else(|| Error::InvalidParameter("this algorithm needs the rank-net tree".into()))
    }
}

/// Sequential champion scan over a list of members: the first member is
/// champion, each later member challenges it with the query
/// `(challenger, champion)` and takes over on `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChampionScan {
    pub champion: usize,
    pub next: usize,
    pub len: usize,
}

impl ChampionScan {
    pub fn new(len: usize) -> Self {
        ChampionScan {
            champion: 0,
            next: 1,
            len,
        }
    }

    /// Indices `(challenger, champion)` of the pending comparison.
    pub fn pending(&self) -> Option<(usize, usize)> {
        (self.next < self.len).then_some((self.next, self.champion))
    }

    pub fn feed(&mut self, answer: Answer) {
        if answer == Answer::Plus {
            self.champion = self.next;
        }
        self.next += 1;
    }
}

/// Single-elimination bracket over member indices. Each match is `k`
/// games of the query `(a, b)`; `a` takes a game on `+1`. The player with
/// more games advances, the earlier slot on a draw; an unpaired last
/// player gets a bye.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    round: Vec<usize>,
    winners: Vec<usize>,
    pos: usize,
    wins: (u32, u32),
    k: u32,
}

impl Bracket {
    pub fn new(len: usize, k: u32) -> Self {
        let mut b = Bracket {
            round: (0..len).collect(),
            winners: Vec::new(),
            pos: 0,
            wins: (0, 0),
            k: k.max(1),
        };
        b.settle();
        b
    }

    pub fn games_per_match(&self) -> u32 {
        self.k
    }

    fn settle(&mut self) {
        loop {
            if self.round.len() <= 1 && self.winners.is_empty() {
                return;
            }
            if self.pos + 1 < self.round.len() {
                return;
            }
            if self.pos < self.round.len() {
                self.winners.push(self.round[self.pos]);
            }
            self.round = std::mem::take(&mut self.winners);
            self.pos = 0;
        }
    }

    /// Indices of the current match, or `None` once a winner is known.
    pub fn pending(&self) -> Option<(usize, usize)> {
        (self.pos + 1 < self.round.len()).then(|| (self.round[self.pos], self.round[self.pos + 1]))
    }

    pub fn winner(&self) -> Option<usize> {
        (self.round.len() == 1 && self.winners.is_empty()).then(|| self.round[0])
    }

    pub fn feed(&mut self, answer: Answer) {
        match answer {
            Answer::Plus => self.wins.0 += 1,
            Answer::Minus => self.wins.1 += 1,
        }
        if self.wins.0 + self.wins.1 == self.k {
            let (a, b) = (self.round[self.pos], self.round[self.pos + 1]);
            self.winners
                .push(if self.wins.1 > self.wins.0 { b } else { a });
            self.wins = (0, 0);
            self.pos += 2;
            self.settle();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Machine {
    Online {
        net: RankNet,
        scan: ChampionScan,
    },
    Tree {
        node: usize,
        scan: ChampionScan,
    },
    Noisy {
        node: usize,
        bracket: Bracket,
    },
    Gbs {
        space: Vec<ItemId>,
        pending: (ItemId, ItemId),
    },
    Finished {
        result: ItemId,
        domain: Vec<ItemId>,
    },
}

/// What a session wants next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Step {
    Query { x: ItemId, y: ItemId },
    Done { result: ItemId },
}

/// Observable state, as exposed to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub status: SessionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<[ItemId; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<ItemId>,
    pub queries_so_far: usize,
    pub level: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Awaiting,
    Finished,
}

#[derive(Debug, Clone)]
pub struct Session {
    algorithm: Algorithm,
    table: Arc<RankTable>,
    tree: Option<Arc<RankNetTree>>,
    pairs: Option<Arc<PairSet>>,
    machine: Machine,
    level: u32,
    log: QueryLog,
    counters: CostCounters,
}

impl PartialEq for Session {
    fn eq(&self, o: &Self) -> bool {
        self.algorithm == o.algorithm
            && self.machine == o.machine
            && self.level == o.level
            && self.log == o.log
            && self.counters == o.counters
    }
}

impl Session {
    pub fn new(ctx: &SearchContext, algorithm: Algorithm) -> Result<Self> {
        let table = ctx.table.clone();
        let n = table.len();
        let mut s = Session {
            algorithm,
            table,
            tree: None,
            pairs: None,
            machine: Machine::Finished {
                result: 0,
                domain: vec![],
            },
            level: 1,
            log: QueryLog::default(),
            counters: CostCounters::default(),
        };
        let all: Vec<ItemId> = (0..n).collect();
        match algorithm {
            Algorithm::RankNet => {
                let root = (0..n).find(|&z| s.table.mass(z) > 0.0).unwrap_or(0);
                let net = build_rank_net_counted(&s.table, root, &all, &mut s.counters)?;
                s.enter_net(net)?;
            }
            Algorithm::Tree => {
                s.tree = Some(ctx.tree()?);
                s.enter_node(0);
            }
            Algorithm::Noisy(params) => {
                params.validate()?;
                s.tree = Some(ctx.tree()?);
                s.enter_node(0);
            }
            Algorithm::Gbs { variant } => {
                if variant == GbsVariant::Full && n > gbs::FULL_GBS_MAX_N {
                    return Err(Error::TooLarge {
                        n,
                        max: gbs::FULL_GBS_MAX_N,
                    });
                }
                s.pairs = Some(match variant {
                    GbsVariant::Full => Arc::new(PairSet::All),
                    GbsVariant::Fast => Arc::new(PairSet::WithinVersionSpace),
                    GbsVariant::Sparse => ctx.same_net_pairs.clone().ok_or_else(|| {
                        Error::InvalidParameter("sparse GBS needs the rank-net tree".into())
                    })?,
                });
                s.gbs_advance(all);
            }
        }
        Ok(s)
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn log(&self) -> &QueryLog {
        &self.log
    }

    pub fn counters(&self) -> CostCounters {
        self.counters
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.machine, Machine::Finished { .. })
    }

    /// Items still possible for the target. Under a truthful oracle the
    /// target never leaves this set.
    pub fn current_domain(&self) -> &[ItemId] {
        match &self.machine {
            Machine::Online { net, .. } => &net.domain,
            Machine::Tree { node, .. } | Machine::Noisy { node, .. } => {
                &self.tree.as_ref().expect("tree session").node(*node).domain
            }
            Machine::Gbs { space, .. } => space,
            Machine::Finished { domain, .. } => domain,
        }
    }

    pub fn next(&self) -> Step {
        match &self.machine {
            Machine::Online { net, scan } => {
                let (a, b) = scan.pending().expect("scan in progress");
                Step::Query {
                    x: net.members[a],
                    y: net.members[b],
                }
            }
            Machine::Tree { node, scan } => {
                let members = &self
                    .tree
                    .as_ref()
                    .expect("tree session")
                    .node(*node)
                    .members;
                let (a, b) = scan.pending().expect("scan in progress");
                Step::Query {
                    x: members[a],
                    y: members[b],
                }
            }
            Machine::Noisy { node, bracket } => {
                let members = &self
                    .tree
                    .as_ref()
                    .expect("tree session")
                    .node(*node)
                    .members;
                let (a, b) = bracket.pending().expect("match in progress");
                Step::Query {
                    x: members[a],
                    y: members[b],
                }
            }
            Machine::Gbs { pending, .. } => Step::Query {
                x: pending.0,
                y: pending.1,
            },
            Machine::Finished { result, .. } => Step::Done { result: *result },
        }
    }

    pub fn state(&self) -> SessionState {
        let (status, pair, result) = match self.next() {
            Step::Query { x, y } => (SessionStatus::Awaiting, Some([x, y]), None),
            Step::Done { result } => (SessionStatus::Finished, None, Some(result)),
        };
        SessionState {
            status,
            pair,
            result,
            queries_so_far: self.log.query_count(),
            level: self.level,
        }
    }

    /// Accepts `+1` or `-1`.
    pub fn answer_sign(&mut self, sign: i64) -> Result<Step> {
        if self.is_finished() {
            return Err(Error::SessionFinished);
        }
        self.answer(Answer::from_sign(sign)?)
    }

    pub fn answer(&mut self, answer: Answer) -> Result<Step> {
        let Step::Query { x, y } = self.next() else {
            return Err(Error::SessionFinished);
        };
        let gbs_next = match &self.machine {
            Machine::Gbs { space, pending } => Some(gbs::update_version_space(
                &self.table,
                space,
                *pending,
                answer,
            )?),
            _ => None,
        };
        self.log.push(x, y, answer);
        self.counters.oracle_queries += 1;
        let machine = std::mem::replace(
            &mut self.machine,
            Machine::Finished {
                result: 0,
                domain: vec![],
            },
        );
        match machine {
            Machine::Online { net, mut scan } => {
                scan.feed(answer);
                self.online_progress(net, scan)?;
            }
            Machine::Tree { node, mut scan } => {
                self.counters.table_lookups += 1;
                scan.feed(answer);
                if scan.pending().is_some() {
                    self.machine = Machine::Tree { node, scan };
                } else {
                    self.descend_tree(node, scan.champion);
                }
            }
            Machine::Noisy { node, mut bracket } => {
                self.counters.table_lookups += 1;
                bracket.feed(answer);
                match bracket.winner() {
                    Some(w) => self.descend_tree(node, w),
                    None => self.machine = Machine::Noisy { node, bracket },
                }
            }
            Machine::Gbs { .. } => self.gbs_advance(gbs_next.expect("computed above")),
            Machine::Finished { .. } => unreachable!("checked above"),
        }
        Ok(self.next())
    }

    fn enter_net(&mut self, net: RankNet) -> Result<()> {
        let scan = ChampionScan::new(net.members.len());
        self.online_progress(net, scan)
    }

    fn online_progress(&mut self, net: RankNet, scan: ChampionScan) -> Result<()> {
        if scan.pending().is_some() {
            self.machine = Machine::Online { net, scan };
            return Ok(());
        }
        let ball = &net.balls[scan.champion];
        self.counters.table_lookups += 1;
        if ball.is_leaf() {
            self.machine = Machine::Finished {
                result: ball.center,
                domain: ball.members.clone(),
            };
            return Ok(());
        }
        self.level += 1;
        let next =
            build_rank_net_counted(&self.table, ball.center, &ball.members, &mut self.counters)?;
        self.enter_net(next)
    }

    fn enter_node(&mut self, node: usize) {
        let tree = self.tree.clone().expect("tree session");
        let members = &tree.node(node).members;
        self.counters.table_lookups += 1;
        match self.algorithm {
            Algorithm::Noisy(params) => {
                let k = repetition_factor(self.level, members.len(), &params);
                let bracket = Bracket::new(members.len(), k);
                match bracket.winner() {
                    Some(w) => self.descend_tree(node, w),
                    None => self.machine = Machine::Noisy { node, bracket },
                }
            }
            _ => {
                let scan = ChampionScan::new(members.len());
                if scan.pending().is_some() {
                    self.machine = Machine::Tree { node, scan };
                } else {
                    self.descend_tree(node, 0);
                }
            }
        }
    }

    fn descend_tree(&mut self, node: usize, winner: usize) {
        let tree = self.tree.clone().expect("tree session");
        let ball = &tree.node(node).balls[winner];
        self.counters.table_lookups += 1;
        match ball.child {
            Some(child) => {
                self.level += 1;
                self.enter_node(child);
            }
            None => {
                self.machine = Machine::Finished {
                    result: ball.center,
                    domain: ball.members.clone(),
                }
            }
        }
    }

    fn gbs_advance(&mut self, space: Vec<ItemId>) {
        if let Some(result) = gbs::resolved_item(&self.table, &space) {
            self.machine = Machine::Finished {
                result,
                domain: space,
            };
            return;
        }
        let pairs = self.pairs.clone().expect("gbs session");
        match gbs::select_query(&self.table, &space, &pairs, &mut self.counters) {
            Some(pending) => self.machine = Machine::Gbs { space, pending },
            None => {
                // positive members no pair can split are indistinguishable
                let result = space
                    .iter()
                    .copied()
                    .find(|&z| self.table.mass(z) > 0.0)
                    .unwrap_or(space[0]);
                self.machine = Machine::Finished {
                    result,
                    domain: space,
                };
            }
        }
    }

    /// JSON-lines transcript: one `{seq, x, y, answer}` line per query and
    /// a final `{result, queries}` line once finished.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.log.entries().iter().enumerate() {
            let line = TranscriptLine::Query {
                seq: i + 1,
                x: e.x,
                y: e.y,
                answer: e.answer,
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        if let Step::Done { result } = self.next() {
            let line = TranscriptLine::Result {
                result,
                queries: self.log.query_count(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TranscriptLine {
    Query {
        seq: usize,
        x: ItemId,
        y: ItemId,
        answer: Answer,
    },
    Result {
        result: ItemId,
        queries: usize,
    },
}

/// Parses a transcript back into its answers (the final line is checked
/// for shape only).
pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptLine>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Replays recorded answers into a fresh session. Each recorded pair must
/// match the pair the session asks for.
pub fn replay(
    ctx: &SearchContext,
    algorithm: Algorithm,
    lines: &[TranscriptLine],
) -> Result<Session> {
    let mut s = Session::new(ctx, algorithm)?;
    for line in lines {
        if let TranscriptLine::Query { x, y, answer, .. } = *line {
            match s.next() {
                Step::Query { x: ex, y: ey } if (ex, ey) == (x, y) => {
                    s.answer(answer)?;
                }
                _ => {
                    return Err(Error::Mismatch(format!(
                        "transcript query ({x}, {y}) does not match the session"
                    )))
                }
            }
        }
    }
    Ok(s)
}

/// Result of driving a session to completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub result: ItemId,
    pub queries: usize,
    pub counters: CostCounters,
    pub log: QueryLog,
}

/// Answers the session's queries with `oracle` until it finishes.
pub fn drive<O: Oracle + ?Sized>(session: &mut Session, oracle: &mut O) -> Result<SearchOutcome> {
    loop {
        match session.next() {
            Step::Query { x, y } => {
                let a = oracle.ask(x, y);
                session.answer(a)?;
            }
            Step::Done { result } => {
                return Ok(SearchOutcome {
                    result,
                    queries: session.log.query_count(),
                    counters: session.counters,
                    log: session.log.clone(),
                })
            }
        }
    }
}

pub fn run<O: Oracle + ?Sized>(
    ctx: &SearchContext,
    algorithm: Algorithm,
    oracle: &mut O,
) -> Result<SearchOutcome> {
    let mut s = Session::new(ctx, algorithm)?;
    drive(&mut s, oracle)
}

/// Nets built on the fly while descending.
pub fn rank_net_search<O: Oracle + ?Sized>(
    ctx: &SearchContext,
    oracle: &mut O,
) -> Result<SearchOutcome> {
    run(ctx, Algorithm::RankNet, oracle)
}

/// Descent of the precomputed tree.
pub fn tree_search<O: Oracle + ?Sized>(
    ctx: &SearchContext,
    oracle: &mut O,
) -> Result<SearchOutcome> {
    run(ctx, Algorithm::Tree, oracle)
}

/// Tree descent with a tournament per level; correct with probability at
/// least `1 - δ` when each answer is wrong with probability at most `ε`.
pub fn noisy_search<O: Oracle + ?Sized>(
    ctx: &SearchContext,
    oracle: &mut O,
    params: NoiseParams,
) -> Result<SearchOutcome> {
    run(ctx, Algorithm::Noisy(params), oracle)
}

pub fn gbs_search<O: Oracle + ?Sized>(
    ctx: &SearchContext,
    oracle: &mut O,
    variant: GbsVariant,
) -> Result<SearchOutcome> {
    run(ctx, Algorithm::Gbs { variant }, oracle)
}

/// Member nearest to the target by champion scan, and the queries spent.
pub fn nearest_in_net<O: Oracle + ?Sized>(oracle: &mut O, members: &[ItemId]) -> (ItemId, usize) {
    let mut scan = ChampionScan::new(members.len());
    let mut queries = 0;
    while let Some((a, b)) = scan.pending() {
        scan.feed(oracle.ask(members[a], members[b]));
        queries += 1;
    }
    (members[scan.champion], queries)
}

/// Bracket winner among `members` with `k` games per match, and the
/// queries spent.
pub fn tournament<O: Oracle + ?Sized>(
    oracle: &mut O,
    members: &[ItemId],
    k: u32,
) -> (ItemId, usize) {
    let mut bracket = Bracket::new(members.len(), k);
    let mut queries = 0;
    while let Some((a, b)) = bracket.pending() {
        bracket.feed(oracle.ask(members[a], members[b]));
        queries += 1;
    }
    (
        members[bracket.winner().expect("bracket finished")],
        queries,
    )
}
