//! Parsers for the LISP-style domain (`.pomp`), problem (`.prob`), and
//! plan file formats. Keywords are case-insensitive, identifiers are not.
//! Every error carries the source span it was detected at.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    ActionSchema, Atom, ConcurrencyItem, Domain, ForallBlock, ForallBody, ItemPolarity, Literal,
    Polarity, Problem, SchemaPattern, State, Term, VarConstraint, WhenClause,
};
use crate::ordering;
use crate::sexpr::{self, Sexpr, SexprError, Span};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{0}")]
    Lex(#[from] SexprError),
    #[error("{span}: {message}")]
    Syntax { span: Span, message: String },
}

impl ParseError {
    fn at(span: Span, message: impl Into<String>) -> Self {
        ParseError::Syntax { span, message: message.into() }
    }
}

type Result<T> = std::result::Result<T, ParseError>;

fn keyword_eq(token: &str, kw: &str) -> bool {
    token.eq_ignore_ascii_case(kw)
}

fn expect_list<'a>(e: &'a Sexpr, what: &str) -> Result<&'a [Sexpr]> {
    e.list().ok_or_else(|| ParseError::at(e.span(), format!("expected {what}, found atom")))
}

fn expect_atom<'a>(e: &'a Sexpr, what: &str) -> Result<&'a str> {
    e.atom().ok_or_else(|| ParseError::at(e.span(), format!("expected {what}, found list")))
}

fn head_is(e: &Sexpr, kw: &str) -> bool {
    matches!(e.list().and_then(|l| l.first()).and_then(Sexpr::atom), Some(h) if keyword_eq(h, kw))
}

fn term_of(token: &str) -> Term {
    if token.starts_with('?') {
        Term::var(token)
    } else {
        Term::constant(token)
    }
}

fn parse_term(e: &Sexpr) -> Result<Term> {
    Ok(term_of(expect_atom(e, "a term")?))
}

/// Tracks predicate arities across every usage in a file set.
#[derive(Debug, Default)]
struct Arities {
    seen: BTreeMap<String, (usize, Span)>,
}

impl Arities {
    fn record(&mut self, predicate: &str, arity: usize, span: Span) -> Result<()> {
        match self.seen.get(predicate) {
            Some(&(known, first)) if known != arity => Err(ParseError::at(
                span,
                format!(
                    "arity mismatch for predicate '{predicate}': {arity} args here, {known} at {first}"
                ),
            )),
            Some(_) => Ok(()),
            None => {
                self.seen.insert(predicate.to_string(), (arity, span));
                Ok(())
            }
        }
    }
}

/// `(= x y)` or `(not (= x y))`.
fn try_parse_constraint(e: &Sexpr) -> Result<Option<VarConstraint>> {
    let Some(items) = e.list() else { return Ok(None) };
    let Some(head) = items.first().and_then(Sexpr::atom) else { return Ok(None) };
    if head == "=" {
        if items.len() != 3 {
            return Err(ParseError::at(e.span(), "'=' takes exactly two terms"));
        }
        return Ok(Some(VarConstraint::Eq(parse_term(&items[1])?, parse_term(&items[2])?)));
    }
    if keyword_eq(head, "not") && items.len() == 2 {
        if let Some(inner) = items[1].list() {
            if inner.first().and_then(Sexpr::atom) == Some("=") {
                if inner.len() != 3 {
                    return Err(ParseError::at(items[1].span(), "'=' takes exactly two terms"));
                }
                return Ok(Some(VarConstraint::Ne(
                    parse_term(&inner[1])?,
                    parse_term(&inner[2])?,
                )));
            }
        }
    }
    Ok(None)
}

fn parse_atom_expr(e: &Sexpr, arities: &mut Arities) -> Result<(String, Vec<Term>)> {
    let items = expect_list(e, "a predicate application")?;
    let head = items
        .first()
        .ok_or_else(|| ParseError::at(e.span(), "empty list where a predicate was expected"))?;
    let predicate = expect_atom(head, "a predicate name")?;
    if predicate.starts_with(':') || predicate.starts_with('?') || predicate == "=" {
        return Err(ParseError::at(head.span(), format!("invalid predicate name '{predicate}'")));
    }
    let args = items[1..].iter().map(parse_term).collect::<Result<Vec<_>>>()?;
    arities.record(predicate, args.len(), e.span())?;
    Ok((predicate.to_string(), args))
}

fn parse_literal(e: &Sexpr, arities: &mut Arities) -> Result<Literal> {
    if head_is(e, "not") {
        let items = e.list().unwrap();
        if items.len() != 2 {
            return Err(ParseError::at(e.span(), "'not' takes exactly one argument"));
        }
        let (predicate, args) = parse_atom_expr(&items[1], arities)?;
        return Ok(Literal { polarity: Polarity::Neg, predicate, args });
    }
    let (predicate, args) = parse_atom_expr(e, arities)?;
    Ok(Literal { polarity: Polarity::Pos, predicate, args })
}

/// A condition list: literals plus `=`/`!=` constraints, possibly wrapped
/// in `(and ...)`, possibly `()`.
fn parse_condition(e: &Sexpr, arities: &mut Arities) -> Result<(Vec<Literal>, Vec<VarConstraint>)> {
    let mut lits = Vec::new();
    let mut constraints = Vec::new();
    let elems: Vec<&Sexpr> = if e.is_empty_list() {
        Vec::new()
    } else if head_is(e, "and") {
        e.list().unwrap()[1..].iter().collect()
    } else {
        vec![e]
    };
    for elem in elems {
        match try_parse_constraint(elem)? {
            Some(c) => constraints.push(c),
            None => lits.push(parse_literal(elem, arities)?),
        }
    }
    Ok((lits, constraints))
}

fn parse_pattern(e: &Sexpr) -> Result<SchemaPattern> {
    let items = expect_list(e, "an action pattern")?;
    let head = items
        .first()
        .ok_or_else(|| ParseError::at(e.span(), "empty list where an action pattern was expected"))?;
    let schema = expect_atom(head, "an action name")?.to_string();
    let args = items[1..].iter().map(parse_term).collect::<Result<Vec<_>>>()?;
    Ok(SchemaPattern { schema, args })
}

/// One entry of a concurrent action list:
///   (not (and PATTERN CONSTRAINT...)) | (not PATTERN)   forbidden
///   (and PATTERN CONSTRAINT...)       | PATTERN         required
fn parse_concurrency_item(e: &Sexpr) -> Result<ConcurrencyItem> {
    fn pattern_and_constraints(e: &Sexpr) -> Result<(SchemaPattern, Vec<VarConstraint>)> {
        if head_is(e, "and") {
            let items = e.list().unwrap();
            if items.len() < 2 {
                return Err(ParseError::at(e.span(), "'and' needs an action pattern"));
            }
            let pattern = parse_pattern(&items[1])?;
            let mut constraints = Vec::new();
            for c in &items[2..] {
                match try_parse_constraint(c)? {
                    Some(vc) => constraints.push(vc),
                    None => {
                        return Err(ParseError::at(
                            c.span(),
                            "expected an (in)equality constraint in a concurrency item",
                        ))
                    }
                }
            }
            Ok((pattern, constraints))
        } else {
            Ok((parse_pattern(e)?, Vec::new()))
        }
    }

    if head_is(e, "not") {
        let items = e.list().unwrap();
        if items.len() != 2 {
            return Err(ParseError::at(e.span(), "'not' takes exactly one argument"));
        }
        let (pattern, constraints) = pattern_and_constraints(&items[1])?;
        Ok(ConcurrencyItem { polarity: ItemPolarity::Forbidden, pattern, constraints })
    } else {
        let (pattern, constraints) = pattern_and_constraints(e)?;
        Ok(ConcurrencyItem { polarity: ItemPolarity::Required, pattern, constraints })
    }
}

/// A concurrent action list: one item, `(and ITEM...)`, or `()`. Loose
/// constraints in the list attach to every action item in it.
fn parse_concurrency_list(e: &Sexpr) -> Result<Vec<ConcurrencyItem>> {
    let elems: Vec<&Sexpr> = if e.is_empty_list() {
        Vec::new()
    } else if head_is(e, "and") {
        e.list().unwrap()[1..].iter().collect()
    } else {
        vec![e]
    };
    let mut items = Vec::new();
    let mut loose = Vec::new();
    for elem in elems {
        match try_parse_constraint(elem)? {
            Some(c) => loose.push(c),
            None => items.push(parse_concurrency_item(elem)?),
        }
    }
    for item in &mut items {
        item.constraints.extend(loose.iter().cloned());
    }
    if items.is_empty() && !loose.is_empty() {
        return Err(ParseError::at(e.span(), "concurrency list has constraints but no action pattern"));
    }
    Ok(items)
}

/// `(when (PRECONDS CONCURRENCY) EFFECT)` — the antecedent is a 2-list.
fn parse_when(e: &Sexpr, arities: &mut Arities, group: Option<usize>) -> Result<WhenClause> {
    let items = e.list().unwrap();
    if items.len() != 3 {
        return Err(ParseError::at(
            e.span(),
            "'when' takes an antecedent (preconditions concurrency) and an effect",
        ));
    }
    let ante = expect_list(&items[1], "a (preconditions concurrency) antecedent")?;
    if ante.len() != 2 {
        return Err(ParseError::at(
            items[1].span(),
            format!("'when' antecedent must have exactly 2 parts, found {}", ante.len()),
        ));
    }
    let (pre, pre_constraints) = parse_condition(&ante[0], arities)?;
    let concurrency = parse_concurrency_list(&ante[1])?;
    let (effect, extra) = parse_condition(&items[2], arities)?;
    if !extra.is_empty() {
        return Err(ParseError::at(items[2].span(), "constraints are not allowed in an effect"));
    }
    Ok(WhenClause { pre, pre_constraints, concurrency, effect, group })
}

fn parse_forall(e: &Sexpr, arities: &mut Arities) -> Result<ForallBlock> {
    let items = e.list().unwrap();
    if items.len() != 3 {
        return Err(ParseError::at(e.span(), "'forall' takes variables and a body"));
    }
    // `(forall ?x ...)` or `(forall (?x - type ?y) ...)`; the `- type`
    // annotation is optional and otherwise inferred from usage.
    let vars = match &items[1] {
        Sexpr::Atom { token, span } => {
            if !token.starts_with('?') {
                return Err(ParseError::at(*span, "'forall' binds variables (names start with '?')"));
            }
            vec![term_of(token)]
        }
        Sexpr::List { items: vs, .. } => {
            let mut out: Vec<Term> = Vec::new();
            let mut j = 0;
            while j < vs.len() {
                let tok = expect_atom(&vs[j], "a variable or '-'")?;
                if tok == "-" {
                    j += 1;
                    let ty = expect_atom(
                        vs.get(j).ok_or_else(|| {
                            ParseError::at(vs[j - 1].span(), "'-' must be followed by a type")
                        })?,
                        "a type name",
                    )?;
                    let last = out.last_mut().ok_or_else(|| {
                        ParseError::at(vs[j - 1].span(), "type annotation without a variable")
                    })?;
                    last.ty = Some(ty.to_string());
                } else {
                    if !tok.starts_with('?') {
                        return Err(ParseError::at(vs[j].span(), "'forall' binds variables"));
                    }
                    out.push(term_of(tok));
                }
                j += 1;
            }
            out
        }
    };
    if vars.is_empty() {
        return Err(ParseError::at(items[1].span(), "'forall' needs at least one variable"));
    }
    let body = if head_is(&items[2], "when") {
        ForallBody::When(parse_when(&items[2], arities, None)?)
    } else {
        let (lits, extra) = parse_condition(&items[2], arities)?;
        if !extra.is_empty() {
            return Err(ParseError::at(items[2].span(), "constraints are not allowed in an effect"));
        }
        ForallBody::Effects(lits)
    };
    Ok(ForallBlock { vars, body })
}

/// An effect expression: literals, when clauses, and forall blocks.
fn parse_effect(
    e: &Sexpr,
    arities: &mut Arities,
) -> Result<(Vec<Literal>, Vec<WhenClause>, Vec<ForallBlock>)> {
    let elems: Vec<&Sexpr> = if e.is_empty_list() {
        Vec::new()
    } else if head_is(e, "and") {
        e.list().unwrap()[1..].iter().collect()
    } else {
        vec![e]
    };
    let mut lits = Vec::new();
    let mut whens = Vec::new();
    let mut foralls = Vec::new();
    for elem in elems {
        if head_is(elem, "when") {
            whens.push(parse_when(elem, arities, None)?);
        } else if head_is(elem, "forall") {
            foralls.push(parse_forall(elem, arities)?);
        } else if try_parse_constraint(elem)?.is_some() {
            return Err(ParseError::at(elem.span(), "constraints are not allowed in an effect"));
        } else {
            lits.push(parse_literal(elem, arities)?);
        }
    }
    Ok((lits, whens, foralls))
}

fn parse_operator(e: &Sexpr, arities: &mut Arities) -> Result<ActionSchema> {
    let items = expect_list(e, "an operator definition")?;
    if items.len() < 2 || !head_is(e, "define") {
        return Err(ParseError::at(e.span(), "expected (define (operator NAME) ...)"));
    }
    let header = expect_list(&items[1], "(operator NAME)")?;
    if header.len() != 2 {
        return Err(ParseError::at(items[1].span(), "expected (operator NAME)"));
    }
    let kind = expect_atom(&header[0], "'operator' or 'action'")?;
    if !keyword_eq(kind, "operator") && !keyword_eq(kind, "action") {
        return Err(ParseError::at(header[0].span(), format!("unknown definition kind '{kind}'")));
    }
    let name = expect_atom(&header[1], "an operator name")?.to_string();

    let mut params: Vec<Term> = Vec::new();
    let mut pre = Vec::new();
    let mut pre_constraints = Vec::new();
    let mut concurrency = Vec::new();
    let mut effect = None;
    let mut whens = Vec::new();
    let mut foralls = Vec::new();

    let mut i = 2;
    while i < items.len() {
        let kw = expect_atom(&items[i], "a clause keyword like :effect")?;
        let value = items.get(i + 1).ok_or_else(|| {
            ParseError::at(items[i].span(), format!("clause '{kw}' is missing its value"))
        })?;
        if keyword_eq(kw, ":parameters") {
            for p in expect_list(value, "a parameter list")? {
                let v = expect_atom(p, "a parameter variable")?;
                if !v.starts_with('?') {
                    return Err(ParseError::at(p.span(), "parameters must be variables"));
                }
                params.push(term_of(v));
            }
        } else if keyword_eq(kw, ":precondition") {
            let (l, c) = parse_condition(value, arities)?;
            pre = l;
            pre_constraints = c;
        } else if keyword_eq(kw, ":concurrent") {
            concurrency = parse_concurrency_list(value)?;
        } else if keyword_eq(kw, ":effect") {
            let (l, w, f) = parse_effect(value, arities)?;
            effect = Some(l);
            whens = w;
            foralls = f;
        } else {
            return Err(ParseError::at(items[i].span(), format!("unknown keyword '{kw}'")));
        }
        i += 2;
    }

    let Some(effect) = effect else {
        return Err(ParseError::at(e.span(), format!("operator '{name}' is missing its :effect clause")));
    };

    Ok(ActionSchema { name, params, pre, pre_constraints, concurrency, effect, whens, foralls })
}

/// Parses a `.pomp` domain file.
pub fn parse_domain(text: &str) -> Result<Domain> {
    let top = sexpr::read_one(text)?;
    let items = expect_list(&top, "(define (domain NAME) ...)")?;
    if items.len() < 2 || !head_is(&top, "define") {
        return Err(ParseError::at(top.span(), "expected (define (domain NAME) ...)"));
    }
    let header = expect_list(&items[1], "(domain NAME)")?;
    if header.len() != 2 || !keyword_eq(expect_atom(&header[0], "'domain'")?, "domain") {
        return Err(ParseError::at(items[1].span(), "expected (domain NAME)"));
    }
    let name = expect_atom(&header[1], "a domain name")?.to_string();

    let mut arities = Arities::default();
    let mut schemata: Vec<ActionSchema> = Vec::new();
    for op in &items[2..] {
        let schema = parse_operator(op, &mut arities)?;
        if schemata.iter().any(|s| s.name == schema.name) {
            return Err(ParseError::at(
                op.span(),
                format!("duplicate operator name '{}'", schema.name),
            ));
        }
        schemata.push(schema);
    }
    let predicates = arities.seen.into_iter().map(|(p, (a, _))| (p, a)).collect();
    Ok(Domain { name, schemata, predicates })
}

/// Parses a `.prob` problem file. Object and agent declarations are
/// checked locally; predicate signatures are checked against a domain by
/// [`check_problem`].
pub fn parse_problem(text: &str) -> Result<Problem> {
    let top = sexpr::read_one(text)?;
    let items = expect_list(&top, "(define (problem NAME) ...)")?;
    if items.len() < 2 || !head_is(&top, "define") {
        return Err(ParseError::at(top.span(), "expected (define (problem NAME) ...)"));
    }
    let header = expect_list(&items[1], "(problem NAME)")?;
    if header.len() != 2 || !keyword_eq(expect_atom(&header[0], "'problem'")?, "problem") {
        return Err(ParseError::at(items[1].span(), "expected (problem NAME)"));
    }
    let name = expect_atom(&header[1], "a problem name")?.to_string();

    let mut objects: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut agents: Vec<String> = Vec::new();
    let mut init = State::default();
    let mut goal = Vec::new();
    let mut arities = Arities::default();
    let mut saw_init = false;

    for section in &items[2..] {
        let parts = expect_list(section, "a problem section")?;
        let kw = expect_atom(
            parts.first().ok_or_else(|| ParseError::at(section.span(), "empty section"))?,
            "a section keyword",
        )?;
        if keyword_eq(kw, ":domain") {
            // Informational.
        } else if keyword_eq(kw, ":objects") {
            let mut pending: Vec<(String, Span)> = Vec::new();
            let mut j = 1;
            while j < parts.len() {
                let tok = expect_atom(&parts[j], "an object name or '-'")?;
                if tok == "-" {
                    j += 1;
                    let ty = expect_atom(
                        parts.get(j).ok_or_else(|| {
                            ParseError::at(parts[j - 1].span(), "'-' must be followed by a type")
                        })?,
                        "a type name",
                    )?;
                    for (obj, span) in pending.drain(..) {
                        if objects.insert(obj.clone(), Some(ty.to_string())).is_some() {
                            return Err(ParseError::at(span, format!("object '{obj}' declared twice")));
                        }
                    }
                } else {
                    if tok.starts_with('?') {
                        return Err(ParseError::at(parts[j].span(), "objects must be constants"));
                    }
                    pending.push((tok.to_string(), parts[j].span()));
                }
                j += 1;
            }
            for (obj, span) in pending {
                if objects.insert(obj.clone(), None).is_some() {
                    return Err(ParseError::at(span, format!("object '{obj}' declared twice")));
                }
            }
        } else if keyword_eq(kw, ":agents") {
            for a in &parts[1..] {
                agents.push(expect_atom(a, "an agent constant")?.to_string());
            }
        } else if keyword_eq(kw, ":init") {
            saw_init = true;
            for a in &parts[1..] {
                let lit = parse_literal(a, &mut arities)?;
                if lit.polarity == Polarity::Neg {
                    return Err(ParseError::at(
                        a.span(),
                        "negative literals cannot appear in :init (closed world)",
                    ));
                }
                match lit.to_atom() {
                    Some(atom) => init.insert(atom),
                    None => {
                        return Err(ParseError::at(a.span(), "init atoms must be ground"));
                    }
                }
            }
        } else if keyword_eq(kw, ":goal") {
            if parts.len() != 2 {
                return Err(ParseError::at(section.span(), ":goal takes one condition"));
            }
            let (lits, constraints) = parse_condition(&parts[1], &mut arities)?;
            if !constraints.is_empty() {
                return Err(ParseError::at(parts[1].span(), "goals cannot contain constraints"));
            }
            for l in &lits {
                if !l.is_ground() {
                    return Err(ParseError::at(parts[1].span(), "goal literals must be ground"));
                }
            }
            goal = lits;
        } else {
            return Err(ParseError::at(section.span(), format!("unknown section '{kw}'")));
        }
    }

    if !saw_init {
        return Err(ParseError::at(top.span(), "problem is missing its :init section"));
    }
    for agent in &agents {
        match objects.get(agent) {
            Some(Some(ty)) if ty != "agent" => {
                return Err(ParseError::at(
                    top.span(),
                    format!("agent '{agent}' is declared with non-agent type '{ty}'"),
                ));
            }
            _ => {
                objects.insert(agent.clone(), Some("agent".to_string()));
            }
        }
    }

    let declared =
        |name: &str| objects.contains_key(name) || agents.iter().any(|a| a == name);
    for atom in init.atoms() {
        for arg in &atom.args {
            if !declared(arg) {
                return Err(ParseError::at(
                    top.span(),
                    format!("init mentions undeclared object '{arg}'"),
                ));
            }
        }
    }
    for lit in &goal {
        for arg in &lit.args {
            if !declared(&arg.name) {
                return Err(ParseError::at(
                    top.span(),
                    format!("goal mentions undeclared object '{}'", arg.name),
                ));
            }
        }
    }

    Ok(Problem { name, objects, agents, init, goal })
}

/// Cross-checks a problem against a domain: every predicate used in init
/// and goal must appear in the domain with a matching arity.
pub fn check_problem(problem: &Problem, domain: &Domain) -> std::result::Result<(), String> {
    let check = |predicate: &str, arity: usize| match domain.predicates.get(predicate) {
        None => Err(format!("problem uses predicate '{predicate}' not mentioned in the domain")),
        Some(&a) if a != arity => Err(format!(
            "predicate '{predicate}' used with {arity} args but the domain uses {a}"
        )),
        Some(_) => Ok(()),
    };
    for atom in problem.init.atoms() {
        check(&atom.predicate, atom.args.len())?;
    }
    for lit in &problem.goal {
        check(&lit.predicate, lit.args.len())?;
    }
    Ok(())
}

/// A parsed plan file, not yet resolved against a domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanDoc {
    pub agents: Vec<String>,
    /// Step label -> (schema name, args).
    pub steps: Vec<(String, String, Vec<Term>)>,
    /// (label a, label b, relation set).
    pub orderings: Vec<(String, String, u8)>,
    /// (producer label, condition, consumer label).
    pub links: Vec<(String, Literal, String)>,
    /// (anchor label, forbidden pattern).
    pub nonconcurrency: Vec<(String, ConcurrencyItem)>,
    pub bindings: Vec<VarConstraint>,
}

/// Parses the plan format `print_plan` emits. Extra top-level forms (a
/// printed linearization, say) are ignored, so machine output re-parses
/// as-is.
pub fn parse_plan(text: &str) -> Result<PlanDoc> {
    let forms = sexpr::read_all(text)?;
    let top = forms
        .iter()
        .find(|f| head_is(f, "plan"))
        .ok_or_else(|| ParseError::at(Span::new(1, 1), "expected a (plan ...) form"))?
        .clone();
    let items = expect_list(&top, "(plan ...)")?;
    let mut doc = PlanDoc {
        agents: Vec::new(),
        steps: Vec::new(),
        orderings: Vec::new(),
        links: Vec::new(),
        nonconcurrency: Vec::new(),
        bindings: Vec::new(),
    };
    let mut arities = Arities::default();
    for section in &items[1..] {
        let parts = expect_list(section, "a plan section")?;
        let kw = expect_atom(
            parts.first().ok_or_else(|| ParseError::at(section.span(), "empty section"))?,
            "a section keyword",
        )?;
        if keyword_eq(kw, ":agents") {
            for a in &parts[1..] {
                doc.agents.push(expect_atom(a, "an agent constant")?.to_string());
            }
        } else if keyword_eq(kw, ":steps") {
            for s in &parts[1..] {
                let pair = expect_list(s, "(LABEL (SCHEMA ARGS...))")?;
                if pair.len() != 2 {
                    return Err(ParseError::at(s.span(), "expected (LABEL (SCHEMA ARGS...))"));
                }
                let label = expect_atom(&pair[0], "a step label")?.to_string();
                if doc.steps.iter().any(|(l, _, _)| *l == label) {
                    return Err(ParseError::at(pair[0].span(), format!("duplicate step label '{label}'")));
                }
                let pattern = parse_pattern(&pair[1])?;
                doc.steps.push((label, pattern.schema, pattern.args));
            }
        } else if keyword_eq(kw, ":orderings") {
            for o in &parts[1..] {
                let trip = expect_list(o, "(REL LABEL LABEL)")?;
                if trip.len() != 3 {
                    return Err(ParseError::at(o.span(), "expected (REL LABEL LABEL)"));
                }
                let rel = match expect_atom(&trip[0], "an ordering relation")? {
                    "<" => ordering::LT,
                    ">" => ordering::GT,
                    "=" => ordering::EQ,
                    "!=" => ordering::NE,
                    "<=" => ordering::LE,
                    ">=" => ordering::GE,
                    other => {
                        return Err(ParseError::at(
                            trip[0].span(),
                            format!("unknown ordering relation '{other}'"),
                        ))
                    }
                };
                doc.orderings.push((
                    expect_atom(&trip[1], "a step label")?.to_string(),
                    expect_atom(&trip[2], "a step label")?.to_string(),
                    rel,
                ));
            }
        } else if keyword_eq(kw, ":links") {
            for l in &parts[1..] {
                let trip = expect_list(l, "(PRODUCER CONDITION CONSUMER)")?;
                if trip.len() != 3 {
                    return Err(ParseError::at(l.span(), "expected (PRODUCER CONDITION CONSUMER)"));
                }
                doc.links.push((
                    expect_atom(&trip[0], "a step label")?.to_string(),
                    parse_literal(&trip[1], &mut arities)?,
                    expect_atom(&trip[2], "a step label")?.to_string(),
                ));
            }
        } else if keyword_eq(kw, ":nonconcurrency") {
            for nc in &parts[1..] {
                let pair = expect_list(nc, "(ANCHOR ITEM)")?;
                if pair.len() < 2 {
                    return Err(ParseError::at(nc.span(), "expected (ANCHOR PATTERN CONSTRAINTS...)"));
                }
                let anchor = expect_atom(&pair[0], "a step label")?.to_string();
                let pattern = parse_pattern(&pair[1])?;
                let mut constraints = Vec::new();
                for c in &pair[2..] {
                    match try_parse_constraint(c)? {
                        Some(vc) => constraints.push(vc),
                        None => {
                            return Err(ParseError::at(c.span(), "expected an (in)equality constraint"))
                        }
                    }
                }
                doc.nonconcurrency.push((
                    anchor,
                    ConcurrencyItem { polarity: ItemPolarity::Forbidden, pattern, constraints },
                ));
            }
        } else if keyword_eq(kw, ":bindings") {
            for c in &parts[1..] {
                match try_parse_constraint(c)? {
                    Some(vc) => doc.bindings.push(vc),
                    None => return Err(ParseError::at(c.span(), "expected an (in)equality constraint")),
                }
            }
        } else {
            return Err(ParseError::at(section.span(), format!("unknown section '{kw}'")));
        }
    }
    for (label, _, _) in &doc.steps {
        let _ = label;
    }
    let known = |l: &str| doc.steps.iter().any(|(label, _, _)| label == l);
    for (a, b, _) in &doc.orderings {
        for l in [a, b] {
            if !known(l) {
                return Err(ParseError::at(top.span(), format!("ordering names unknown step '{l}'")));
            }
        }
    }
    Ok(doc)
}

/// Convenience used across tests: an atom from `(pred a b)` text.
pub fn atom_from_text(text: &str) -> Atom {
    let mut arities = Arities::default();
    let e = sexpr::read_one(text).expect("atom text");
    let lit = parse_literal(&e, &mut arities).expect("atom literal");
    lit.to_atom().expect("ground atom")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ItemPolarity;

    const FIG3: &str = r#"
(define (domain fig3)
  (define (operator pickup)
    :parameters    (?a1 ?x ?y)
    :precondition  (and (on ?x ?y) (handempty ?a1) (clear ?x) (not (= ?x ?y)))
    :concurrent    (not (and (pickup ?a2 ?x ?y) (not (= ?a1 ?a2))))
    :effect        (and (not (handempty ?a1)) (not (on ?x ?y)) (holding ?a1 ?x))))
"#;

    #[test]
    fn fig3_pickup_parses_with_forbidden_item() {
        let d = parse_domain(FIG3).unwrap();
        let s = d.schema("pickup").unwrap();
        assert_eq!(s.params.len(), 3);
        assert_eq!(s.pre.len(), 3);
        assert_eq!(s.pre_constraints, vec![VarConstraint::Ne(Term::var("?x"), Term::var("?y"))]);
        assert_eq!(s.concurrency.len(), 1);
        let item = &s.concurrency[0];
        assert_eq!(item.polarity, ItemPolarity::Forbidden);
        assert_eq!(item.pattern.schema, "pickup");
        assert_eq!(item.constraints, vec![VarConstraint::Ne(Term::var("?a1"), Term::var("?a2"))]);
    }

    const FIG4: &str = r#"
(define (domain fig4)
  (define (operator lower)
    :parameters    (?a1 ?s1)
    :precondition  (and (holding ?a1 ?s1) (raised ?s1))
    :effect        (and (not (raised ?s1))
                        (forall ?x
                          (when ((ontable ?x)
                                 (not (and (lower ?a2 ?s2) (not (= ?s1 ?s2)))))
                            (and (onfloor ?x) (not (ontable ?x))))))))
"#;

    #[test]
    fn fig4_lower_parses_forall_wrapped_when() {
        let d = parse_domain(FIG4).unwrap();
        let s = d.schema("lower").unwrap();
        assert_eq!(s.foralls.len(), 1);
        let ForallBody::When(w) = &s.foralls[0].body else { panic!("expected when body") };
        assert_eq!(w.pre.len(), 1);
        assert_eq!(w.concurrency.len(), 1);
        assert_eq!(w.concurrency[0].polarity, ItemPolarity::Forbidden);
        assert_eq!(w.effect.len(), 2);
    }

    #[test]
    fn missing_effect_clause_is_named_in_the_error() {
        let err = parse_domain("(define (domain d) (define (operator x) :parameters (?a)))")
            .unwrap_err();
        assert!(err.to_string().contains(":effect"), "error was: {err}");
    }

    #[test]
    fn arity_mismatch_carries_span() {
        let err = parse_domain(
            "(define (domain d) (define (operator x) :parameters (?a) :precondition (p ?a) :effect (p ?a ?a)))",
        )
        .unwrap_err();
        let ParseError::Syntax { span, message } = err else { panic!("expected syntax error") };
        assert!(message.contains("arity"));
        assert!(span.line >= 1);
    }

    #[test]
    fn empty_goal_parses_to_empty_list() {
        let p = parse_problem(
            "(define (problem p) (:objects a - thing) (:agents G) (:init (q a)) (:goal ()))",
        )
        .unwrap();
        assert!(p.goal.is_empty());
        assert_eq!(p.agents, vec!["G"]);
        assert_eq!(p.objects.get("G"), Some(&Some("agent".to_string())));
    }

    #[test]
    fn undeclared_object_in_init_is_rejected() {
        let err = parse_problem(
            "(define (problem p) (:objects a - thing) (:agents G) (:init (q b)) (:goal ()))",
        )
        .unwrap_err();
        assert!(err.to_string().contains("undeclared object 'b'"));
    }

    #[test]
    fn loose_constraints_attach_to_every_item() {
        let d = parse_domain(
            "(define (domain d) (define (operator m) :parameters (?a1 ?r1) \
             :concurrent (and (m ?a2 ?r1) (not (= ?a1 ?a2))) :effect (p ?a1)))",
        )
        .unwrap();
        let item = &d.schema("m").unwrap().concurrency[0];
        assert_eq!(item.polarity, ItemPolarity::Required);
        assert_eq!(item.constraints.len(), 1);
    }
}
