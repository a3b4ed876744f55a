//! Shorthand ASL notation for chains: `o0`/`u0` are bang arcs with
//! `u = +u_max`/`-u_max`, `oK`/`uK` ride `x_K = +x_mK`/`-x_mK`.
//!
//! Tangent markers follow their host arc, e.g. `o0(o3,2)` or `o0(o3,2|u1,2)`.
//! Additional end-constraints sit between arcs, e.g. `o0 {(u1,1)} u0`; side
//! orders differing between left and right are written `l/r`, and `a`, `i`, `c`
//! stand for active, identical and clear.

use std::fmt;

use serde::Serialize;

use super::CoiProblem;
use crate::arcs::{behavior_from_kind, BehaviorKind, ConstraintId};
use crate::asl::{AdditionalEndConstraint, AugmentedSwitchingLaw, EndTouch, SideOrder, TangentMarker};
use crate::{Error, Result, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CoiTok {
    /// `0` for the control bound, `K` for state `x_K`.
    pub order: usize,
    pub sign: i8,
}

impl CoiTok {
    pub fn bang(sign: i8) -> Self {
        CoiTok { order: 0, sign }
    }

    pub fn state(k: usize, sign: i8) -> Self {
        CoiTok { order: k, sign }
    }

    pub fn is_bang(&self) -> bool {
        self.order == 0
    }

    /// Constraint id the token refers to when used as a touch.
    pub fn constraint(&self, problem: &CoiProblem) -> Result<ConstraintId> {
        if self.order == 0 {
            let p = problem.system()?.num_constraints();
            return Ok(if self.sign > 0 { p } else { p + 1 });
        }
        problem
            .constraint_id(self.order, self.sign > 0)
            .ok_or_else(|| Error::InvalidInput(format!("{self}: x{} has no finite bound", self.order)))
    }

    pub fn kind(&self, problem: &CoiProblem) -> Result<BehaviorKind> {
        if self.order == 0 {
            Ok(BehaviorKind::Unconstrained { sign: self.sign })
        } else {
            Ok(BehaviorKind::Constrained {
                active: vec![self.constraint(problem)?],
            })
        }
    }

    fn from_id(problem: &CoiProblem, p: usize, id: ConstraintId) -> Result<Self> {
        if id == p {
            return Ok(CoiTok::bang(1));
        }
        if id == p + 1 {
            return Ok(CoiTok::bang(-1));
        }
        let (k, up) = problem
            .constraint_of(id)
            .ok_or_else(|| Error::InvalidInput(format!("constraint {id} is not a chain bound")))?;
        Ok(CoiTok::state(k, if up { 1 } else { -1 }))
    }
}

impl fmt::Display for CoiTok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = if self.sign > 0 { 'o' } else { 'u' };
        write!(f, "{c}{}", self.order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoiEnd {
    pub tok: CoiTok,
    #[serde(skip)]
    pub left: SideOrder,
    #[serde(skip)]
    pub right: SideOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoiAsl {
    pub arcs: Vec<CoiTok>,
    /// Per arc, per marker: touched tokens with their even orders.
    pub markers: Vec<Vec<Vec<(CoiTok, usize)>>>,
    /// Per junction (`arcs.len() - 1`).
    pub ends: Vec<Vec<CoiEnd>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Screen {
    NotOptimal,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DofReport {
    pub n_arcs: usize,
    pub sigma: usize,
    pub n_minus_sigma: i64,
    /// `N - sigma - n`.
    pub dof: i64,
    /// Side conditions 1-3 of the arc-count bound, checked literally.
    pub conditions: [bool; 3],
    pub screen: Screen,
    /// The arc-count bound assumes no tangent markers and no interior
    /// end-constraints; otherwise only the rank test decides.
    pub applicable: bool,
}

fn side_text(o: SideOrder) -> String {
    match o {
        SideOrder::Active => "a".into(),
        SideOrder::Identical => "i".into(),
        SideOrder::Clear => "c".into(),
        SideOrder::Order(r) => r.to_string(),
    }
}

impl fmt::Display for CoiAsl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tok) in self.arcs.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
                if let Some(end) = self.ends.get(i - 1).filter(|e| !e.is_empty()) {
                    let items: Vec<String> = end
                        .iter()
                        .map(|e| {
                            let o = if e.left == e.right {
                                side_text(e.left)
                            } else {
                                format!("{}/{}", side_text(e.left), side_text(e.right))
                            };
                            format!("({},{o})", e.tok)
                        })
                        .collect();
                    write!(f, "{{{}}} ", items.join(","))?;
                }
            }
            write!(f, "{tok}")?;
            for m in self.markers.get(i).map(Vec::as_slice).unwrap_or(&[]) {
                let items: Vec<String> = m.iter().map(|(t, r)| format!("{t},{r}")).collect();
                write!(f, "({})", items.join("|"))?;
            }
        }
        Ok(())
    }
}

struct Lexer<'a> {
    chars: Vec<(usize, char)>,
    at: usize,
    _src: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.char_indices().collect(),
            at: 0,
            _src: src,
        }
    }

    fn pos(&self) -> usize {
        self.chars.get(self.at).map_or_else(
            || self.chars.last().map_or(0, |&(i, c)| i + c.len_utf8()),
            |&(i, _)| i,
        )
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.at).map(|&(_, c)| c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.at += 1;
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.at;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.at += 1;
        }
        if start == self.at {
            return self.err("expected a number");
        }
        let s: String = self.chars[start..self.at].iter().map(|&(_, c)| c).collect();
        s.parse().or_else(|_| self.err("number out of range"))
    }

    fn token(&mut self) -> Result<CoiTok> {
        self.skip_ws();
        let sign = match self.peek() {
            Some('o') => 1,
            Some('u') => -1,
            _ => return self.err("expected a token oK or uK"),
        };
        self.at += 1;
        if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
            return self.err("expected a digit after o/u");
        }
        let order = self.number()?;
        Ok(CoiTok { order, sign })
    }

    fn side(&mut self) -> Result<SideOrder> {
        self.skip_ws();
        match self.peek() {
            Some('a') => {
                self.at += 1;
                Ok(SideOrder::Active)
            }
            Some('i') => {
                self.at += 1;
                Ok(SideOrder::Identical)
            }
            Some('c') => {
                self.at += 1;
                Ok(SideOrder::Clear)
            }
            _ => Ok(SideOrder::Order(self.number()?)),
        }
    }

    fn marker(&mut self) -> Result<Vec<(CoiTok, usize)>> {
        self.expect('(')?;
        let mut out = Vec::new();
        loop {
            let tok = self.token()?;
            self.expect(',')?;
            let r = self.number()?;
            if r == 0 || r % 2 != 0 {
                return self.err("tangency orders must be even and positive");
            }
            out.push((tok, r));
            self.skip_ws();
            match self.peek() {
                Some('|') => self.at += 1,
                Some(')') => {
                    self.at += 1;
                    return Ok(out);
                }
                _ => return self.err("expected '|' or ')'"),
            }
        }
    }

    fn end_group(&mut self) -> Result<Vec<CoiEnd>> {
        self.expect('{')?;
        let mut out = Vec::new();
        loop {
            self.expect('(')?;
            let tok = self.token()?;
            self.expect(',')?;
            let left = self.side()?;
            self.skip_ws();
            let right = if self.peek() == Some('/') {
                self.at += 1;
                self.side()?
            } else {
                left
            };
            self.expect(')')?;
            out.push(CoiEnd { tok, left, right });
            self.skip_ws();
            match self.peek() {
                Some(',') => self.at += 1,
                Some('}') => {
                    self.at += 1;
                    return Ok(out);
                }
                _ => return self.err("expected ',' or '}'"),
            }
        }
    }
}

/// Parses the shorthand notation. Structural checks (adjacent arcs distinct,
/// constrained neighbours riding different bounds) are applied here.
pub fn parse_coi_asl(text: &str) -> Result<CoiAsl> {
    let mut lx = Lexer::new(text);
    let mut asl = CoiAsl::default();
    let mut pending: Option<(usize, Vec<CoiEnd>)> = None;
    loop {
        lx.skip_ws();
        match lx.peek() {
            None => break,
            Some('(') => {
                if asl.arcs.is_empty() {
                    return lx.err("tangent marker before the first arc");
                }
                if pending.is_some() {
                    return lx.err("tangent marker after an end-constraint");
                }
                let m = lx.marker()?;
                asl.markers.last_mut().unwrap().push(m);
            }
            Some('{') => {
                let pos = lx.pos();
                if asl.arcs.is_empty() {
                    return lx.err("end-constraint before the first arc");
                }
                if pending.is_some() {
                    return lx.err("two end-constraints at one junction");
                }
                pending = Some((pos, lx.end_group()?));
            }
            Some(_) => {
                let pos = lx.pos();
                let tok = lx.token()?;
                if let Some(&prev) = asl.arcs.last() {
                    if prev == tok {
                        return Err(Error::Parse {
                            pos,
                            msg: format!("adjacent arcs must differ ({tok} follows {tok})"),
                        });
                    }
                    if !prev.is_bang() && !tok.is_bang() && prev.order == tok.order {
                        return Err(Error::Parse {
                            pos,
                            msg: "adjacent constrained arcs ride the same state".into(),
                        });
                    }
                    asl.ends.push(pending.take().map(|p| p.1).unwrap_or_default());
                }
                asl.arcs.push(tok);
                asl.markers.push(Vec::new());
            }
        }
    }
    if let Some((pos, _)) = pending {
        return Err(Error::Parse {
            pos,
            msg: "end-constraint after the last arc".into(),
        });
    }
    if asl.arcs.is_empty() {
        return Err(Error::Parse { pos: 0, msg: "empty ASL".into() });
    }
    Ok(asl)
}

impl CoiAsl {
    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// `sum |S_i|`.
    pub fn sigma(&self) -> usize {
        self.arcs.iter().map(|t| t.order).sum()
    }

    pub fn dof_report(&self, n: usize) -> DofReport {
        let n_arcs = self.num_arcs();
        let sigma = self.sigma();
        let n_minus_sigma = n_arcs as i64 - sigma as i64;
        let dof = n_minus_sigma - n as i64;
        DofReport {
            n_arcs,
            sigma,
            n_minus_sigma,
            dof,
            conditions: corollary2_conditions(&self.arcs.iter().map(|t| t.order).collect::<Vec<_>>()),
            screen: if dof > 0 { Screen::NotOptimal } else { Screen::Candidate },
            applicable: self.markers.iter().all(Vec::is_empty) && self.ends.iter().all(Vec::is_empty),
        }
    }

    pub fn kinds(&self, problem: &CoiProblem) -> Result<Vec<BehaviorKind>> {
        self.arcs.iter().map(|t| t.kind(problem)).collect()
    }

    /// Full ASL over the problem's system, markers and end-constraints included.
    pub fn to_law(&self, problem: &CoiProblem, tol: &Tolerances) -> Result<AugmentedSwitchingLaw> {
        let sys = problem.system()?;
        let arcs = self
            .kinds(problem)?
            .iter()
            .map(|k| behavior_from_kind(&sys, k, tol))
            .collect::<Result<Vec<_>>>()?;
        let mut law = AugmentedSwitchingLaw::new(arcs);
        for (i, ms) in self.markers.iter().enumerate() {
            for m in ms {
                let touched = m
                    .iter()
                    .map(|(t, r)| Ok((t.constraint(problem)?, *r)))
                    .collect::<Result<Vec<_>>>()?;
                law.markers[i].push(TangentMarker { touched });
            }
        }
        for (j, es) in self.ends.iter().enumerate() {
            let touched = es
                .iter()
                .map(|e| {
                    Ok(EndTouch {
                        id: e.tok.constraint(problem)?,
                        left: e.left,
                        right: e.right,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            law.end_constraints[j] = AdditionalEndConstraint { touched };
        }
        Ok(law)
    }

    /// Shorthand for a law over a chain problem's system.
    pub fn from_law(problem: &CoiProblem, law: &AugmentedSwitchingLaw) -> Result<Self> {
        let p = problem.system()?.num_constraints();
        let arcs = law
            .arcs
            .iter()
            .map(|a| match &a.kind {
                BehaviorKind::Unconstrained { sign } => Ok(CoiTok::bang(*sign)),
                BehaviorKind::Constrained { active } if active.len() == 1 => {
                    CoiTok::from_id(problem, p, active[0])
                }
                BehaviorKind::Constrained { .. } => Err(Error::InvalidInput(
                    "chain notation has no token for several active bounds".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        let markers = law
            .markers
            .iter()
            .map(|ms| {
                ms.iter()
                    .map(|m| {
                        m.touched
                            .iter()
                            .map(|&(id, r)| Ok((CoiTok::from_id(problem, p, id)?, r)))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let ends = law
            .end_constraints
            .iter()
            .map(|e| {
                e.touched
                    .iter()
                    .map(|t| {
                        Ok(CoiEnd {
                            tok: CoiTok::from_id(problem, p, t.id)?,
                            left: t.left,
                            right: t.right,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoiAsl { arcs, markers, ends })
    }
}

/// Conditions 1-3 of the arc-count bound on `s_i = |S_i|`, read literally.
pub fn corollary2_conditions(s: &[usize]) -> [bool; 3] {
    let n = s.len();
    let sum = |a: usize, b: usize| -> usize { s[a..=b].iter().sum() };
    let mut c1 = true;
    let mut c2 = true;
    let mut c3 = true;
    for i in 0..n {
        for j in 0..i {
            if s[j] >= s[i] && sum(j + 1, i) >= i - j {
                c1 = false;
            }
        }
        for j in i + 1..n {
            if s[j] >= s[i] && sum(i, j - 1) >= j - i {
                c2 = false;
            }
        }
        if s[i] > 0 && s[i + 1..].iter().all(|&v| v < s[i]) && sum(i, n - 1) > n - 1 - i {
            c3 = false;
        }
    }
    [c1, c2, c3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_counts() {
        let l1 = parse_coi_asl("u0 u1 o0 o1 u0 o2 u0 u1 o0 o1 u0").unwrap();
        assert_eq!(l1.dof_report(4).n_minus_sigma, 5);
        let l2 = parse_coi_asl("o0 o1 u0 o2 u0 u1 o0 u2 o0 o1 u0").unwrap();
        assert_eq!(l2.dof_report(4).n_minus_sigma, 4);
        assert_eq!(l2.dof_report(4).screen, Screen::Candidate);
        let b = parse_coi_asl("u0 u1 o0 u2 o0 o1 u0 o0 o1 u0 o0").unwrap();
        let r = b.dof_report(4);
        assert_eq!((r.n_arcs, r.sigma, r.n_minus_sigma), (11, 5, 6));
        assert_eq!(r.screen, Screen::NotOptimal);
    }

    #[test]
    fn markers_and_ends_round_trip() {
        let text = "u0 u1 o0(o3,2|u1,2) {(u2,1),(o1,1/2),(u0,c/3)} u0 o2(o0,2)";
        let asl = parse_coi_asl(text).unwrap();
        assert_eq!(asl.markers[2].len(), 1);
        assert_eq!(asl.markers[2][0].len(), 2);
        assert_eq!(asl.ends[2].len(), 3);
        assert_eq!(asl.ends[2][1].right, SideOrder::Order(2));
        assert_eq!(asl.ends[2][2].left, SideOrder::Clear);
        assert_eq!(asl.to_string(), text);
        let again = parse_coi_asl(&asl.to_string()).unwrap();
        assert_eq!(again, asl);
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_coi_asl("o0 x1") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse_coi_asl("o0 o0").is_err());
        assert!(parse_coi_asl("o1 u1").is_err());
        assert!(parse_coi_asl("o0 (o3,3)").is_err());
        assert!(parse_coi_asl("o0 {(u1,1)}").is_err());
        assert!(parse_coi_asl("  ").is_err());
    }

    #[test]
    fn literal_side_conditions() {
        assert_eq!(corollary2_conditions(&[0, 1, 0, 0]), [true, true, true]);
        // a second-order arc between two bang arcs already breaks condition 1
        assert!(!corollary2_conditions(&[0, 2, 0])[0]);
    }
}
