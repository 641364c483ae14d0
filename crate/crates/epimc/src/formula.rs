//! Knowledge formulas over boolean variables: AST, macro expansion, and
//! evaluation against a Kripke structure.
//!
//! The core language is deliberately small — truth, atoms, negation,
//! conjunction and a per-agent knowledge operator. Everything else
//! (disjunction, implication, "knows whether", the protocol macros) is
//! expanded into the core forms at construction time, so the evaluator has a
//! single code path.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kripke::{KripkeStructure, WorldId, WorldSet};

/// An agent name. Case studies use `"1".."n"` plus the third party `"T"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Agent(pub String);

impl Agent {
    pub fn new(name: impl Into<String>) -> Self {
        Agent(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Agent {
    fn from(s: &str) -> Self {
        Agent(s.to_string())
    }
}

/// A variable name: optional protocol-instance tag, optional owning agent, a
/// base name, and an optional index.
///
/// Rendered as `dc<t>.<owner>.<base>[<index>]`, with absent pieces omitted.
/// Protocol builders tag the variables of each round with the instance, so
/// repeated rounds never collide (`dc2.3.b`), while round results stay
/// addressable by index (`3.rr[2]`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarName {
    instance: Option<u32>,
    owner: Option<String>,
    base: String,
    index: Option<u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NameError {
    #[error("empty variable name")]
    Empty,
    #[error("malformed variable name `{0}`")]
    Malformed(String),
}

impl VarName {
    /// A variable owned by no agent.
    pub fn global(base: impl Into<String>) -> Self {
        VarName { instance: None, owner: None, base: base.into(), index: None }
    }

    /// `owner.base`
    pub fn owned(owner: &Agent, base: impl Into<String>) -> Self {
        VarName { instance: None, owner: Some(owner.0.clone()), base: base.into(), index: None }
    }

    /// `owner.base[index]`
    pub fn indexed(owner: &Agent, base: impl Into<String>, index: u32) -> Self {
        VarName {
            instance: None,
            owner: Some(owner.0.clone()),
            base: base.into(),
            index: Some(index),
        }
    }

    /// `dc<t>.owner.base`
    pub fn instanced(t: u32, owner: &Agent, base: impl Into<String>) -> Self {
        VarName { instance: Some(t), owner: Some(owner.0.clone()), base: base.into(), index: None }
    }

    pub fn with_index(mut self, index: u32) -> Self {
        self.index = Some(index);
        self
    }

    pub fn instance(&self) -> Option<u32> {
        self.instance
    }

    pub fn owner(&self) -> Option<&str> {
        self.owner.as_deref()
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn index(&self) -> Option<u32> {
        self.index
    }

    /// Parse the canonical rendering back into a name.
    pub fn parse(text: &str) -> Result<Self, NameError> {
        if text.is_empty() {
            return Err(NameError::Empty);
        }
        let (body, index) = match text.find('[') {
            Some(open) => {
                let close = text
                    .rfind(']')
                    .filter(|c| *c == text.len() - 1)
                    .ok_or_else(|| NameError::Malformed(text.to_string()))?;
                let idx: u32 = text[open + 1..close]
                    .parse()
                    .map_err(|_| NameError::Malformed(text.to_string()))?;
                (&text[..open], Some(idx))
            }
            None => (text, None),
        };
        let parts: Vec<&str> = body.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(NameError::Malformed(text.to_string()));
        }
        let name = match parts.as_slice() {
            [base] => VarName { instance: None, owner: None, base: base.to_string(), index },
            [owner, base] => VarName {
                instance: None,
                owner: Some(owner.to_string()),
                base: base.to_string(),
                index,
            },
            [tag, owner, base] => match parse_instance_tag(tag) {
                Some(t) => VarName {
                    instance: Some(t),
                    owner: Some(owner.to_string()),
                    base: base.to_string(),
                    index,
                },
                None => return Err(NameError::Malformed(text.to_string())),
            },
            _ => return Err(NameError::Malformed(text.to_string())),
        };
        Ok(name)
    }
}

/// `dc<digits>` is reserved for instance tags.
pub(crate) fn parse_instance_tag(s: &str) -> Option<u32> {
    s.strip_prefix("dc").and_then(|d| {
        if d.is_empty() || !d.bytes().all(|b| b.is_ascii_digit()) {
            None
        } else {
            d.parse().ok()
        }
    })
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(t) = self.instance {
            write!(f, "dc{t}.")?;
        }
        if let Some(o) = &self.owner {
            write!(f, "{o}.")?;
        }
        f.write_str(&self.base)?;
        if let Some(i) = self.index {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

impl Serialize for VarName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VarName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        VarName::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A knowledge formula in the five core forms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Top,
    Atom(VarName),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Knows(Agent, Box<Formula>),
}

impl Formula {
    pub fn top() -> Self {
        Formula::Top
    }

    pub fn bottom() -> Self {
        Formula::Not(Box::new(Formula::Top))
    }

    pub fn atom(v: VarName) -> Self {
        Formula::Atom(v)
    }

    /// A literal: the atom, or its negation when `value` is false.
    pub fn literal(v: VarName, value: bool) -> Self {
        if value {
            Formula::Atom(v)
        } else {
            Formula::not(Formula::Atom(v))
        }
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    /// `a ∨ b`, expanded as `¬(¬a ∧ ¬b)`.
    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::not(Formula::and(Formula::not(a), Formula::not(b)))
    }

    /// `a ⇒ b`, expanded as `¬(a ∧ ¬b)`.
    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::not(Formula::and(a, Formula::not(b)))
    }

    /// `a ⇔ b`, expanded as `(a ⇒ b) ∧ (b ⇒ a)`.
    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::and(
            Formula::implies(a.clone(), b.clone()),
            Formula::implies(b, a),
        )
    }

    pub fn knows(agent: Agent, body: Formula) -> Self {
        Formula::Knows(agent, Box::new(body))
    }

    /// `K̂_i φ`: the agent knows whether φ holds, `K_i φ ∨ K_i ¬φ`.
    pub fn knows_whether(agent: Agent, body: Formula) -> Self {
        Formula::or(
            Formula::knows(agent.clone(), body.clone()),
            Formula::knows(agent, Formula::not(body)),
        )
    }

    /// Conjunction over an iterator; empty conjunction is ⊤.
    pub fn and_all(items: impl IntoIterator<Item = Formula>) -> Self {
        let mut items = items.into_iter();
        match items.next() {
            None => Formula::Top,
            Some(first) => items.fold(first, Formula::and),
        }
    }

    /// Disjunction over an iterator; empty disjunction is ⊥.
    pub fn or_all(items: impl IntoIterator<Item = Formula>) -> Self {
        let mut items = items.into_iter();
        match items.next() {
            None => Formula::bottom(),
            Some(first) => items.fold(first, Formula::or),
        }
    }

    /// Parse concrete syntax. `ctx` is required for the protocol macros.
    pub fn parse(text: &str, ctx: Option<&MacroContext>) -> Result<Formula, crate::parse::ParseError> {
        crate::parse::formula_from_str(text, ctx)
    }

    /// True when no `K` operator occurs anywhere in the tree.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::Top | Formula::Atom(_) => true,
            Formula::Not(f) => f.is_propositional(),
            Formula::And(a, b) => a.is_propositional() && b.is_propositional(),
            Formula::Knows(..) => false,
        }
    }

    /// All atoms of the formula, deduplicated.
    pub fn atoms(&self) -> Vec<VarName> {
        fn walk(f: &Formula, out: &mut Vec<VarName>) {
            match f {
                Formula::Top => {}
                Formula::Atom(v) => {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
                Formula::Not(g) => walk(g, out),
                Formula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Formula::Knows(_, g) => walk(g, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// The first knowledge subformula in preorder, if any.
    pub fn first_knowledge(&self) -> Option<(&Agent, &Formula)> {
        match self {
            Formula::Top | Formula::Atom(_) => None,
            Formula::Not(f) => f.first_knowledge(),
            Formula::And(a, b) => a.first_knowledge().or_else(|| b.first_knowledge()),
            Formula::Knows(agent, body) => Some((agent, body)),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Top => f.write_str("true"),
            Formula::Atom(v) => write!(f, "{v}"),
            Formula::Not(g) => write!(f, "!{g:#}"),
            Formula::And(a, b) => {
                if f.alternate() {
                    write!(f, "({a} & {b})")
                } else {
                    write!(f, "{a:#} & {b:#}")
                }
            }
            Formula::Knows(i, g) => write!(f, "K[{i}] {g:#}"),
        }
    }
}

/// Which agents count as senders for the reception/delivery predicates:
/// `Strong` requires some *other* agent, `Weak` allows the agent itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Strong,
    Weak,
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strength::Strong => "strong",
            Strength::Weak => "weak",
        })
    }
}

/// Context for expanding the slot-reservation macros (`conflict`, `sender`,
/// `C0`, multi-bit equality).
///
/// Agents are assumed to be named `1..n`. Multi-valued variables are encoded
/// as little-endian bit vectors of `width = ceil(log2(n+1))` bits; the macro
/// expansions compare them bitwise.
#[derive(Debug, Clone)]
pub struct MacroContext {
    pub n: usize,
    pub width: usize,
    pub strength: Strength,
    /// Owner for unqualified names (`message`, `rr[2]`, ...).
    pub owner: Option<Agent>,
    pub slot_request_name: String,
    pub message_name: String,
    pub rr_name: String,
    /// Integer bindings usable wherever an index or slot number is expected.
    pub bindings: BTreeMap<String, i64>,
}

/// Bits needed to encode values `0..=n`.
pub fn slot_width(n: usize) -> usize {
    let mut width = 0;
    while (1usize << width) < n + 1 {
        width += 1;
    }
    width
}

impl MacroContext {
    pub fn new(n: usize, strength: Strength) -> Self {
        let mut bindings = BTreeMap::new();
        bindings.insert("n".to_string(), n as i64);
        MacroContext {
            n,
            width: slot_width(n),
            strength,
            owner: None,
            slot_request_name: "slot_request".to_string(),
            message_name: "message".to_string(),
            rr_name: "rr".to_string(),
            bindings,
        }
    }

    pub fn with_owner(mut self, owner: Agent) -> Self {
        self.owner = Some(owner);
        self
    }

    pub fn bind(mut self, name: &str, value: i64) -> Self {
        self.bindings.insert(name.to_string(), value);
        self
    }

    pub fn agents(&self) -> impl Iterator<Item = Agent> + '_ {
        (1..=self.n).map(|i| Agent::new(i.to_string()))
    }

    fn slot_request_bit(&self, agent: &Agent, bit: usize) -> VarName {
        VarName::indexed(agent, self.slot_request_name.clone(), bit as u32)
    }

    fn message_var(&self, agent: &Agent) -> VarName {
        VarName::owned(agent, self.message_name.clone())
    }

    fn rr_var(&self, agent: &Agent, round: u32) -> VarName {
        VarName::indexed(agent, self.rr_name.clone(), round)
    }

    fn require_owner(&self) -> Result<&Agent, MacroError> {
        self.owner.as_ref().ok_or(MacroError::NoOwner)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MacroError {
    #[error("slot {0} out of range 1..={1}")]
    SlotOutOfRange(i64, usize),
    #[error("value {0} out of range 0..={1}")]
    ValueOutOfRange(i64, usize),
    #[error("bit argument must be 0 or 1, got {0}")]
    BadBit(i64),
    #[error("macro needs an owning agent in the context")]
    NoOwner,
}

/// `agent.slot_request == value`, expanded bitwise over the little-endian
/// encoding.
pub fn expand_slot_request_eq(
    agent: &Agent,
    value: i64,
    ctx: &MacroContext,
) -> Result<Formula, MacroError> {
    if value < 0 || value as usize > ctx.n {
        return Err(MacroError::ValueOutOfRange(value, ctx.n));
    }
    Ok(Formula::and_all((0..ctx.width).map(|b| {
        Formula::literal(ctx.slot_request_bit(agent, b), (value >> b) & 1 == 1)
    })))
}

/// Two distinct agents both requesting slot `s`.
pub fn expand_conflict(s: i64, ctx: &MacroContext) -> Result<Formula, MacroError> {
    if s < 1 || s as usize > ctx.n {
        return Err(MacroError::SlotOutOfRange(s, ctx.n));
    }
    let agents: Vec<Agent> = ctx.agents().collect();
    let mut pairs = Vec::new();
    for (ai, a) in agents.iter().enumerate() {
        for b in agents.iter().skip(ai + 1) {
            pairs.push(Formula::and(
                expand_slot_request_eq(a, s, ctx)?,
                expand_slot_request_eq(b, s, ctx)?,
            ));
        }
    }
    Ok(Formula::or_all(pairs))
}

/// Some agent is transmitting the bit `x`. Under `Strong` the disjunction
/// ranges over agents other than `i`; under `Weak` it includes `i` itself.
pub fn expand_sender(i: &Agent, x: i64, ctx: &MacroContext) -> Result<Formula, MacroError> {
    if x != 0 && x != 1 {
        return Err(MacroError::BadBit(x));
    }
    let terms: Result<Vec<Formula>, MacroError> = ctx
        .agents()
        .filter(|j| ctx.strength == Strength::Weak || j != i)
        .map(|j| {
            Ok(Formula::and(
                Formula::literal(ctx.message_var(&j), x == 1),
                Formula::not(expand_slot_request_eq(&j, 0, ctx)?),
            ))
        })
        .collect();
    Ok(Formula::or_all(terms?))
}

/// Exactly `x` of the owner's reservation round results `rr[1..n]` are 0,
/// expanded as a disjunction over the x-subsets of rounds.
pub fn expand_count_zero(x: i64, ctx: &MacroContext) -> Result<Formula, MacroError> {
    if x < 0 || x as usize > ctx.n {
        return Err(MacroError::ValueOutOfRange(x, ctx.n));
    }
    let owner = ctx.require_owner()?.clone();
    let x = x as usize;
    let rounds: Vec<u32> = (1..=ctx.n as u32).collect();
    let mut cases = Vec::new();
    for mask in 0u32..(1 << ctx.n) {
        if mask.count_ones() as usize != x {
            continue;
        }
        cases.push(Formula::and_all(rounds.iter().enumerate().map(|(pos, t)| {
            // bit set in the mask: this round's result is 0
            Formula::literal(ctx.rr_var(&owner, *t), mask >> pos & 1 == 0)
        })));
    }
    Ok(Formula::or_all(cases))
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitnessError {
    #[error("variable `{0}` not defined in the structure")]
    UnknownVariable(String),
    #[error("agent `{0}` not in the structure")]
    UnknownAgent(String),
    #[error("world index {0} out of range ({1} worlds)")]
    WorldOutOfRange(WorldId, usize),
}

/// A formula with atoms and agents resolved to structure indices.
enum Compiled {
    Top,
    Atom(usize),
    Not(Box<Compiled>),
    And(Box<Compiled>, Box<Compiled>),
    Knows(usize, Box<Compiled>),
}

fn compile(m: &KripkeStructure, f: &Formula) -> Result<Compiled, FitnessError> {
    Ok(match f {
        Formula::Top => Compiled::Top,
        Formula::Atom(v) => Compiled::Atom(
            m.vars()
                .index_of(v)
                .ok_or_else(|| FitnessError::UnknownVariable(v.to_string()))?,
        ),
        Formula::Not(g) => Compiled::Not(Box::new(compile(m, g)?)),
        Formula::And(a, b) => {
            Compiled::And(Box::new(compile(m, a)?), Box::new(compile(m, b)?))
        }
        Formula::Knows(agent, g) => Compiled::Knows(
            m.agent_index(agent)
                .ok_or_else(|| FitnessError::UnknownAgent(agent.to_string()))?,
            Box::new(compile(m, g)?),
        ),
    })
}

fn eval_compiled(m: &KripkeStructure, w: WorldId, f: &Compiled) -> bool {
    match f {
        Compiled::Top => true,
        Compiled::Atom(bit) => m.bit(w, *bit),
        Compiled::Not(g) => !eval_compiled(m, w, g),
        Compiled::And(a, b) => eval_compiled(m, w, a) && eval_compiled(m, w, b),
        Compiled::Knows(agent, g) => {
            // quantify over the agent's equivalence class of w
            let class = m.rel(*agent).class_of(w);
            (0..m.num_worlds())
                .filter(|u| m.rel(*agent).class_of(*u) == class)
                .all(|u| eval_compiled(m, u, g))
        }
    }
}

fn sat_compiled(m: &KripkeStructure, f: &Compiled) -> WorldSet {
    let n = m.num_worlds();
    match f {
        Compiled::Top => WorldSet::full(n),
        Compiled::Atom(bit) => {
            let mut s = WorldSet::empty(n);
            for w in 0..n {
                if m.bit(w, *bit) {
                    s.insert(w);
                }
            }
            s
        }
        Compiled::Not(g) => {
            let mut s = sat_compiled(m, g);
            s.negate();
            s
        }
        Compiled::And(a, b) => {
            let mut s = sat_compiled(m, a);
            s.intersect(&sat_compiled(m, b));
            s
        }
        Compiled::Knows(agent, g) => {
            let body = sat_compiled(m, g);
            let rel = m.rel(*agent);
            let mut class_ok = vec![true; rel.num_classes()];
            for w in 0..n {
                if !body.contains(w) {
                    class_ok[rel.class_of(w)] = false;
                }
            }
            let mut s = WorldSet::empty(n);
            for w in 0..n {
                if class_ok[rel.class_of(w)] {
                    s.insert(w);
                }
            }
            s
        }
    }
}

/// Evaluate `f` at a single world by direct induction (the knowledge clause
/// scans the whole class).
pub fn eval_at(m: &KripkeStructure, w: WorldId, f: &Formula) -> Result<bool, FitnessError> {
    if w >= m.num_worlds() {
        return Err(FitnessError::WorldOutOfRange(w, m.num_worlds()));
    }
    let compiled = compile(m, f)?;
    Ok(eval_compiled(m, w, &compiled))
}

/// The set of worlds satisfying `f`, computed bottom-up one subformula at a
/// time. Agrees with [`eval_at`] pointwise; this is the bulk path used by
/// [`valid`].
pub fn sat_set(m: &KripkeStructure, f: &Formula) -> Result<WorldSet, FitnessError> {
    let compiled = compile(m, f)?;
    Ok(sat_compiled(m, &compiled))
}

/// Outcome of a validity check. On failure, `counterexample` is the failing
/// world with the lowest enumeration index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub counterexample: Option<WorldId>,
}

/// Is `f` true at every world of `m`?
pub fn valid(m: &KripkeStructure, f: &Formula) -> Result<Verdict, FitnessError> {
    let sat = sat_set(m, f)?;
    match sat.first_missing() {
        None => Ok(Verdict { holds: true, counterexample: None }),
        Some(w) => Ok(Verdict { holds: false, counterexample: Some(w) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kripke::{build_structure, ObservationSets, VariableTable};

    fn var(s: &str) -> VarName {
        VarName::parse(s).unwrap()
    }

    fn two_var_structure() -> KripkeStructure {
        // worlds 00,01,10,11 over {a, b}; agent "1" sees a, agent "2" sees b
        let vars = VariableTable::new(vec![var("a"), var("b")]).unwrap();
        let worlds = vec![vec![false, false], vec![true, false], vec![false, true], vec![
            true, true,
        ]];
        let mut obs = ObservationSets::new();
        obs.observe(&Agent::new("1"), var("a"));
        obs.observe(&Agent::new("2"), var("b"));
        build_structure(
            vec![Agent::new("1"), Agent::new("2")],
            vars,
            worlds.into_iter(),
            &obs,
        )
        .unwrap()
    }

    #[test]
    fn names_round_trip() {
        for text in ["m", "2.m", "1.rr[3]", "dc2.1.k_e1_2", "dc1.T.x_3", "T.y"] {
            let v = VarName::parse(text).unwrap();
            assert_eq!(v.to_string(), text);
        }
        assert_eq!(var("dc2.1.k_e1_2").instance(), Some(2));
        assert_eq!(var("dc2.1.k_e1_2").owner(), Some("1"));
        assert_eq!(var("1.rr[3]").index(), Some(3));
        assert!(VarName::parse("").is_err());
        assert!(VarName::parse("a..b").is_err());
        assert!(VarName::parse("a.b.c.d").is_err());
    }

    #[test]
    fn knowledge_of_observed_variable() {
        let m = two_var_structure();
        let a = Formula::atom(var("a"));
        // agent 1 sees a, so it knows a exactly where a holds
        let knows_a = Formula::knows(Agent::new("1"), a.clone());
        for w in 0..4 {
            let expect = m.bit(w, 0);
            assert_eq!(eval_at(&m, w, &knows_a).unwrap(), expect);
        }
        // agent 2 never knows a (a varies within each of its classes)
        let k2 = Formula::knows(Agent::new("2"), a);
        for w in 0..4 {
            assert!(!eval_at(&m, w, &k2).unwrap());
        }
    }

    #[test]
    fn top_and_knows_top_always_hold() {
        let m = two_var_structure();
        assert!(valid(&m, &Formula::top()).unwrap().holds);
        assert!(valid(&m, &Formula::knows(Agent::new("2"), Formula::top())).unwrap().holds);
    }

    #[test]
    fn counterexample_is_lowest_index() {
        let m = two_var_structure();
        let v = valid(&m, &Formula::atom(var("a"))).unwrap();
        assert!(!v.holds);
        assert_eq!(v.counterexample, Some(0));
    }

    #[test]
    fn sat_set_matches_pointwise_eval() {
        let m = two_var_structure();
        let f = Formula::iff(
            Formula::knows_whether(Agent::new("1"), Formula::atom(var("b"))),
            Formula::or(Formula::atom(var("a")), Formula::atom(var("b"))),
        );
        let sat = sat_set(&m, &f).unwrap();
        for w in 0..4 {
            assert_eq!(sat.contains(w), eval_at(&m, w, &f).unwrap());
        }
    }

    #[test]
    fn fitness_errors() {
        let m = two_var_structure();
        assert!(matches!(
            eval_at(&m, 0, &Formula::atom(var("zz"))),
            Err(FitnessError::UnknownVariable(_))
        ));
        assert!(matches!(
            eval_at(&m, 0, &Formula::knows(Agent::new("9"), Formula::Top)),
            Err(FitnessError::UnknownAgent(_))
        ));
    }

    #[test]
    fn conflict_expansion_truth_table() {
        let ctx = MacroContext::new(3, Strength::Strong);
        let f = expand_conflict(1, &ctx).unwrap();
        assert!(f.is_propositional());
        // requests (1,1,0): agents 1 and 2 both request slot 1 -> conflict
        // requests (1,2,3): all distinct -> none
        let eval = |requests: [i64; 3]| {
            eval_assignment(&f, &|v: &VarName| {
                let agent: usize = v.owner().unwrap().parse().unwrap();
                let bit = v.index().unwrap();
                (requests[agent - 1] >> bit) & 1 == 1
            })
        };
        assert!(eval([1, 1, 0]));
        assert!(!eval([1, 2, 3]));
        assert!(matches!(expand_conflict(0, &ctx), Err(MacroError::SlotOutOfRange(..))));
        assert!(matches!(expand_conflict(4, &ctx), Err(MacroError::SlotOutOfRange(..))));
    }

    #[test]
    fn sender_strong_excludes_self_weak_includes() {
        let agent1 = Agent::new("1");
        // only agent 1 itself transmits x=0: weak sees it, strong does not
        let assign = |v: &VarName| -> bool {
            match (v.owner().unwrap(), v.base(), v.index()) {
                ("1", "slot_request", Some(0)) => true, // slot 1
                (_, "slot_request", _) => false,
                (_, "message", _) => false,
                other => panic!("unexpected var {other:?}"),
            }
        };
        let strong = MacroContext::new(3, Strength::Strong);
        let weak = MacroContext::new(3, Strength::Weak);
        let f_strong = expand_sender(&agent1, 0, &strong).unwrap();
        let f_weak = expand_sender(&agent1, 0, &weak).unwrap();
        assert!(!eval_assignment(&f_strong, &assign));
        assert!(eval_assignment(&f_weak, &assign));
        // nobody requests a slot: both false for either bit
        let silence = |v: &VarName| v.base() == "never";
        for x in [0, 1] {
            assert!(!eval_assignment(&expand_sender(&agent1, x, &strong).unwrap(), &silence));
            assert!(!eval_assignment(&expand_sender(&agent1, x, &weak).unwrap(), &silence));
        }
    }

    #[test]
    fn count_zero_expansion() {
        let ctx = MacroContext::new(3, Strength::Strong).with_owner(Agent::new("1"));
        // x = 0 means every reservation result is 1
        let f0 = expand_count_zero(0, &ctx).unwrap();
        assert!(eval_assignment(&f0, &|_| true));
        assert!(!eval_assignment(&f0, &|v| v.index() != Some(2)));
        // x = n means all are 0
        let f3 = expand_count_zero(3, &ctx).unwrap();
        assert!(eval_assignment(&f3, &|_| false));
        assert!(!eval_assignment(&f3, &|v| v.index() == Some(1)));
        // n = 4, rr = (1,0,0,1): two zeros
        let ctx4 = MacroContext::new(4, Strength::Strong).with_owner(Agent::new("1"));
        let rr = |v: &VarName| matches!(v.index(), Some(1) | Some(4));
        assert!(eval_assignment(&expand_count_zero(2, &ctx4).unwrap(), &rr));
        assert!(!eval_assignment(&expand_count_zero(1, &ctx4).unwrap(), &rr));
    }

    /// Evaluate a propositional formula under a direct assignment of atoms.
    fn eval_assignment(f: &Formula, assign: &dyn Fn(&VarName) -> bool) -> bool {
        match f {
            Formula::Top => true,
            Formula::Atom(v) => assign(v),
            Formula::Not(g) => !eval_assignment(g, assign),
            Formula::And(a, b) => eval_assignment(a, assign) && eval_assignment(b, assign),
            Formula::Knows(..) => panic!("not propositional"),
        }
    }
}
