use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::*;
use crate::syntax::{parse_do, parse_expr, parse_program};

const CHAIN: &str = "var x = 1;\ndef inc1 = x + 1;\ndef inc2 = inc1 + 1;";

fn chain_env() -> TypeEnv {
    infer_program(&TypeEnv::new(), &parse_program(CHAIN).unwrap()).unwrap()
}

fn extend(env: &TypeEnv, src: &str) -> TypeEnv {
    let delta = infer_program(env, &parse_program(src).unwrap()).unwrap();
    assert!(compatible(env, &delta).is_ok(), "{src}: {}", compatible(env, &delta));
    env.merged(&delta)
}

fn ty_of(env: &TypeEnv, src: &str) -> Result<(Type, DepSet), TypeError> {
    infer_expr(env, &LocalCtx::new(), &parse_expr(src).unwrap())
}

fn deps(entries: &[(&str, Type)]) -> DepSet {
    entries.iter().map(|(n, t)| (String::from(*n), t.clone())).collect()
}

fn writes(names: &[&str]) -> WriteSet {
    names.iter().map(|n| String::from(*n)).collect()
}

fn codes(r: &CompatReport) -> Vec<&'static str> {
    r.violations.iter().map(|v| v.code()).collect()
}

fn x_env() -> TypeEnv {
    let mut env = TypeEnv::new();
    env.bind_var("x", Type::INT);
    env
}

#[test]
fn var_plus_one_reads_x() {
    assert_eq!(ty_of(&x_env(), "x + 1").unwrap(), (Type::INT, deps(&[("x", Type::INT)])));
}

#[test]
fn literals_have_no_dependencies() {
    let env = TypeEnv::new();
    assert_eq!(ty_of(&env, "1").unwrap(), (Type::INT, DepSet::new()));
    assert_eq!(ty_of(&env, "\"s\"").unwrap(), (Type::STRING, DepSet::new()));
    assert_eq!(ty_of(&env, "()").unwrap(), (Type::UNIT, DepSet::new()));
    assert_eq!(ty_of(&env, "!true").unwrap(), (Type::BOOL, DepSet::new()));
}

#[test]
fn action_rule_records_reads_and_writes() {
    let (t, d) = ty_of(&x_env(), "action { x := x + 1 }").unwrap();
    assert_eq!(t, Type::action(deps(&[("x", Type::INT)]), writes(&["x"])));
    assert!(d.is_empty());
}

#[test]
fn action_rule_accumulates_over_writes() {
    let mut env = chain_env();
    env.bind_var("y", Type::BOOL);
    let (t, _) = ty_of(&env, "action { x := inc2; y := true }").unwrap();
    assert_eq!(t, Type::action(deps(&[("inc2", Type::INT)]), writes(&["x", "y"])));
}

#[test]
fn writing_a_definition_is_a_kind_mismatch() {
    let e = ty_of(&chain_env(), "action { inc1 := 2 }").unwrap_err();
    assert_eq!(e.code(), "KindMismatch");
    assert_eq!(e.name(), Some("inc1"));
}

#[test]
fn writing_a_lambda_parameter_is_a_kind_mismatch() {
    let e = ty_of(&x_env(), "fn x => action { x := 1 }").unwrap_err();
    assert_eq!(e.code(), "KindMismatch");
}

#[test]
fn write_needs_matching_type() {
    let e = ty_of(&x_env(), "action { x := true }").unwrap_err();
    assert_eq!(e.code(), "TypeMismatch");
}

#[test]
fn write_target_must_be_bound() {
    let e = ty_of(&TypeEnv::new(), "action { q := 1 }").unwrap_err();
    assert_eq!(e.code(), "UnboundName");
}

#[test]
fn nested_action_writes_stay_latent() {
    let mut env = x_env();
    env.bind_var("y", Type::INT);
    env.bind_def("inner", DepSet::new(), Type::action(DepSet::new(), writes(&["y"])));
    let (t, _) = ty_of(&env, "action { x := (fn a => 1) inner }").unwrap();
    let Type::Action { writes: w, reads } = t else { panic!() };
    assert_eq!(w, writes(&["x"]));
    assert!(reads.contains("inner"));
}

#[test]
fn lambda_keeps_body_dependencies_latent() {
    let (t, d) = ty_of(&x_env(), "fn n => n + x").unwrap();
    assert!(d.is_empty());
    assert_eq!(t, Type::func(Type::INT, Type::INT, deps(&[("x", Type::INT)])));
}

#[test]
fn application_unions_latent_dependencies() {
    let env = extend(&x_env(), "def add = fn n => n + x;");
    let (t, d) = ty_of(&env, "add 2").unwrap();
    assert_eq!(t, Type::INT);
    assert_eq!(d, deps(&[("add", env.get("add").unwrap().ty.clone()), ("x", Type::INT)]));
}

#[test]
fn locals_shadow_top_level_names() {
    let (t, d) = ty_of(&x_env(), "fn x => x && true").unwrap();
    assert_eq!(t, Type::func(Type::BOOL, Type::BOOL, DepSet::new()));
    assert!(d.is_empty());
}

#[test]
fn if_branches_must_agree() {
    assert_eq!(ty_of(&x_env(), "if true then 1 else false").unwrap_err().code(), "BranchMismatch");
    assert_eq!(ty_of(&x_env(), "if 1 then 1 else 2").unwrap_err().code(), "TypeMismatch");
    let (t, d) = ty_of(&x_env(), "if x < 2 then x else 0").unwrap();
    assert_eq!((t, d), (Type::INT, deps(&[("x", Type::INT)])));
}

#[test]
fn applying_a_non_function() {
    assert_eq!(ty_of(&x_env(), "x 1").unwrap_err().code(), "NonFunctionApplication");
}

#[test]
fn unbound_reference() {
    let e = ty_of(&TypeEnv::new(), "nope + 1").unwrap_err();
    assert_eq!(e.kind, TypeErrorKind::UnboundName("nope".into()));
}

#[test]
fn equality_needs_a_base_type() {
    assert_eq!(ty_of(&x_env(), "x == 1").unwrap().0, Type::BOOL);
    assert_eq!(ty_of(&x_env(), "\"a\" == \"b\"").unwrap().0, Type::BOOL);
    assert!(ty_of(&x_env(), "(fn a => a + 1) == (fn b => b + 1)").is_err());
    assert_eq!(ty_of(&x_env(), "1 == true").unwrap_err().code(), "TypeMismatch");
}

#[test]
fn unconstrained_parameter_is_ambiguous() {
    assert_eq!(ty_of(&TypeEnv::new(), "fn a => a").unwrap_err().code(), "AmbiguousType");
    assert_eq!(ty_of(&TypeEnv::new(), "(fn a => a) 1").unwrap().0, Type::INT);
}

#[test]
fn inference_is_deterministic() {
    let env = extend(&chain_env(), "def f = fn n => if n < inc2 then n else x;");
    let a = ty_of(&env, "action { x := f inc1 }");
    let b = ty_of(&env, "action { x := f inc1 }");
    assert_eq!(a, b);
}

#[test]
fn chain_program_bindings() {
    let env = chain_env();
    let names: Vec<&str> = env.names().map(|n| n.as_str()).collect();
    assert_eq!(names, ["x", "inc1", "inc2"]);
    assert_eq!(env.get("x").unwrap(), &Binding { kind: Kind::StateVar, ty: Type::INT });
    assert_eq!(
        env.get("inc1").unwrap(),
        &Binding { kind: Kind::Def(deps(&[("x", Type::INT)])), ty: Type::INT }
    );
    assert_eq!(
        env.get("inc2").unwrap(),
        &Binding { kind: Kind::Def(deps(&[("inc1", Type::INT)])), ty: Type::INT }
    );
}

#[test]
fn empty_program_contributes_nothing() {
    let delta = infer_program(&TypeEnv::new(), &parse_program("").unwrap()).unwrap();
    assert!(delta.is_empty());
}

#[test]
fn state_initialiser_must_be_closed() {
    let e = infer_program(&TypeEnv::new(), &parse_program("var y = x + 1;").unwrap()).unwrap_err();
    assert_eq!(e.code(), "UnboundName");
    let e = infer_program(&chain_env(), &parse_program("var y = x + 1;").unwrap()).unwrap_err();
    assert_eq!(e.code(), "StateInitNotClosed");
    assert_eq!(e.decl.as_deref(), Some("y"));
    assert!(e.span.is_some());
}

#[test]
fn duplicate_declaration_in_one_program() {
    let e = infer_program(&TypeEnv::new(), &parse_program("var a = 1; def a = 2;").unwrap()).unwrap_err();
    assert_eq!(e.kind, TypeErrorKind::DuplicateInProgram("a".into()));
}

#[test]
fn earlier_declarations_are_visible_to_later_ones() {
    let delta = infer_program(&TypeEnv::new(), &parse_program("var a = 1; def b = a * 2;").unwrap()).unwrap();
    assert_eq!(delta.get("b").unwrap().kind, Kind::Def(deps(&[("a", Type::INT)])));
}

#[test]
fn merge_with_empty_is_identity() {
    let env = chain_env();
    assert_eq!(env_merge(&TypeEnv::new(), &env), env);
    assert_eq!(env_merge(&env, &TypeEnv::new()), env);
}

#[test]
fn merge_overwrites_in_place() {
    let mut base = TypeEnv::new();
    base.bind_var("x", Type::INT);
    let mut delta = TypeEnv::new();
    delta.bind_var("x", Type::BOOL);
    let m = env_merge(&base, &delta);
    assert_eq!(m.len(), 1);
    assert_eq!(m.get("x").unwrap().ty, Type::BOOL);
}

#[test]
fn merge_replaces_one_definition() {
    let env = chain_env();
    let delta = infer_program(&env, &parse_program("def inc1 = x + 10;").unwrap()).unwrap();
    let m = env_merge(&env, &delta);
    let names: Vec<&str> = m.names().map(|n| n.as_str()).collect();
    assert_eq!(names, ["x", "inc1", "inc2"]);
    assert_eq!(m.get("x"), env.get("x"));
    assert_eq!(m.get("inc2"), env.get("inc2"));
    assert_eq!(m.get("inc1"), delta.get("inc1"));
}

#[test]
fn merge_names_are_the_union() {
    let env = chain_env();
    let delta = infer_program(&env, &parse_program("def inc3 = inc2 + 1; var z = 0;").unwrap()).unwrap();
    let merged = env_merge(&env, &delta);
    let got: BTreeSet<&Name> = merged.names().collect();
    let want: BTreeSet<&Name> = env.names().chain(delta.names()).collect();
    assert_eq!(got, want);
}

#[test]
fn compatible_extension() {
    let env = chain_env();
    let mut delta = TypeEnv::new();
    delta.bind_def("inc3", deps(&[("inc2", Type::INT)]), Type::INT);
    assert!(compatible(&env, &delta).is_ok());
}

#[test]
fn compatible_rejects_a_cycle() {
    let mut base = TypeEnv::new();
    base.bind_def("a", deps(&[("b", Type::INT)]), Type::INT);
    let mut delta = TypeEnv::new();
    delta.bind_def("b", deps(&[("a", Type::INT)]), Type::INT);
    let r = compatible(&base, &delta);
    let cycle = r.violations.iter().find_map(|v| match v {
        Violation::Cycle { path } => Some(path.clone()),
        _ => None,
    });
    let path = cycle.expect("cycle violation");
    assert_eq!(path.first(), path.last());
    assert_eq!(path.len(), 3);
    assert!(path.contains(&"a".into()) && path.contains(&"b".into()));
}

#[test]
fn compatible_rejects_a_cycle_built_by_a_program() {
    let delta = infer_program(&TypeEnv::new(), &parse_program("def a = 1; def b = a;").unwrap()).unwrap();
    let env = env_merge(&TypeEnv::new(), &delta);
    let re = infer_program(&env, &parse_program("def a = b;").unwrap()).unwrap();
    assert!(codes(&compatible(&env, &re)).contains(&"Cycle"));
}

#[test]
fn compatible_flags_stale_dependent() {
    let env = chain_env();
    let mut delta = TypeEnv::new();
    delta.bind_var("x", Type::BOOL);
    let r = compatible(&env, &delta);
    assert!(r.violations.contains(&Violation::StaleDependent { dependent: "inc1".into(), changed: "x".into() }));
    // inc2 still matches inc1's (unchanged) binding.
    assert!(!r.violations.iter().any(|v| matches!(v, Violation::StaleDependent { dependent, .. } if dependent == "inc2")));
}

#[test]
fn retype_with_dependents_rebound_is_fine() {
    let env = chain_env();
    let delta = infer_program(&env, &parse_program("var x = true; def inc1 = if x then 1 else 0;").unwrap()).unwrap();
    assert!(compatible(&env, &delta).is_ok());
}

#[test]
fn compatible_rejects_kind_flip() {
    let env = chain_env();
    let delta = infer_program(&env, &parse_program("def x = 5;").unwrap()).unwrap();
    assert!(codes(&compatible(&env, &delta)).contains(&"KindFlip"));
    let delta = infer_program(&env, &parse_program("var inc1 = 5;").unwrap()).unwrap();
    assert!(codes(&compatible(&env, &delta)).contains(&"KindFlip"));
}

#[test]
fn stale_latent_reads_are_caught() {
    let env = extend(&x_env(), "def bump = action { x := x + 1 };");
    let delta = infer_program(&env, &parse_program("var x = \"s\";").unwrap()).unwrap();
    let r = compatible(&env, &delta);
    assert!(r.violations.contains(&Violation::StaleDependent { dependent: "bump".into(), changed: "x".into() }));
}

#[test]
fn compatible_ok_implies_well_formed() {
    let env = chain_env();
    for src in ["def inc3 = inc2 + 1;", "def inc1 = x * 3;", "var x = 7;", "var y = 0; def s = x + y;"] {
        let delta = infer_program(&env, &parse_program(src).unwrap()).unwrap();
        assert!(compatible(&env, &delta).is_ok(), "{src}");
        assert!(well_formed(&env_merge(&env, &delta)).is_ok(), "{src}");
    }
}

#[test]
fn well_formed_cases() {
    assert!(well_formed(&chain_env()).is_ok());
    assert!(well_formed(&TypeEnv::new()).is_ok());
    let mut env = TypeEnv::new();
    env.bind_def("f", deps(&[("f", Type::INT)]), Type::INT);
    let r = well_formed(&env);
    assert_eq!(r.violations, [Violation::Cycle { path: alloc::vec!["f".into(), "f".into()] }]);
}

#[test]
fn well_formed_checks_consistency() {
    let mut env = chain_env();
    env.bind_def("bad", deps(&[("x", Type::BOOL)]), Type::INT);
    let r = well_formed(&env);
    assert_eq!(codes(&r), ["InconsistentDependency"]);
    let mut env = chain_env();
    env.bind_def("dangling", deps(&[("gone", Type::INT)]), Type::INT);
    assert_eq!(codes(&well_formed(&env)), ["InconsistentDependency"]);
}

#[test]
fn well_formed_checks_write_targets() {
    let mut env = chain_env();
    env.bind_def("w", DepSet::new(), Type::action(DepSet::new(), writes(&["inc1"])));
    assert_eq!(codes(&well_formed(&env)), ["BadWriteTarget"]);
}

#[test]
fn transitive_reads_cases() {
    let env = chain_env();
    let r = transitive_reads(&env, &deps(&[("inc2", Type::INT)]));
    assert_eq!(r.vars, ["x".into()].into_iter().collect());
    assert_eq!(r.defs, ["inc1".into(), "inc2".into()].into_iter().collect());
    let r = transitive_reads(&env, &DepSet::new());
    assert!(r.vars.is_empty() && r.defs.is_empty());
    let r = transitive_reads(&env, &deps(&[("x", Type::INT)]));
    assert_eq!(r.vars.len(), 1);
    assert!(r.defs.is_empty());
}

#[test]
fn check_do_plans_locks() {
    let env = extend(&chain_env(), "def bump = action { x := x + 1 };");
    let plan = check_do(&env, &parse_do("do bump").unwrap()).unwrap();
    assert_eq!(plan.reads.vars, ["x".into()].into_iter().collect());
    assert_eq!(plan.reads.defs, ["bump".into()].into_iter().collect());
    assert_eq!(plan.writes, writes(&["x"]));
}

#[test]
fn check_do_on_non_action() {
    let e = check_do(&TypeEnv::new(), &parse_do("do 1").unwrap()).unwrap_err();
    assert_eq!(e.code(), "NotAnAction");
}

#[test]
fn check_do_on_empty_action() {
    let plan = check_do(&TypeEnv::new(), &parse_do("do (action { })").unwrap()).unwrap();
    assert!(plan.reads.vars.is_empty() && plan.reads.defs.is_empty() && plan.writes.is_empty());
}

#[test]
fn check_do_includes_transitive_action_reads() {
    let env = extend(&chain_env(), "var y = 0; def cp = action { y := inc2 };");
    let plan = check_do(&env, &parse_do("do cp").unwrap()).unwrap();
    assert_eq!(plan.reads.vars, ["x".into()].into_iter().collect());
    assert_eq!(plan.reads.defs, ["cp".into(), "inc1".into(), "inc2".into()].into_iter().collect());
    assert_eq!(plan.writes, writes(&["y"]));
}

#[test]
fn depset_union_conflict() {
    let a = deps(&[("x", Type::INT)]);
    let b = deps(&[("x", Type::BOOL)]);
    assert_eq!(a.union(&b), Err("x".into()));
    assert_eq!(a.union(&a), Ok(a.clone()));
}

#[test]
fn type_display() {
    let t = Type::func(Type::INT, Type::INT, deps(&[("x", Type::INT)]));
    assert_eq!(alloc::format!("{t}"), "Int -{x: Int}-> Int");
    let a = Type::action(deps(&[("x", Type::INT)]), writes(&["x"]));
    assert_eq!(alloc::format!("{a}"), "Action[{x: Int}; {x}]");
}
