//! Shared generators for integration tests.
#![allow(dead_code)]

use proptest::prelude::*;

/// Shape of a randomly generated function body.
#[derive(Debug, Clone)]
pub enum Shape {
    Assign(u8, u8, i64),
    Global(u8),
    Lock(u8),
    Unlock(u8),
    If(Vec<Shape>, Vec<Shape>, bool),
    While(Vec<Shape>),
    For(Vec<Shape>),
    Call(u8),
}

pub fn shape_strategy(depth: u32, allow_calls: bool) -> impl Strategy<Value = Vec<Shape>> {
    let calls = if allow_calls { 3 } else { 0 };
    let leaf = prop_oneof![
        4 => (0u8..3, 0u8..3, -3i64..4).prop_map(|(a, b, k)| Shape::Assign(a, b, k)),
        2 => (0u8..2).prop_map(Shape::Global),
        1 => (0u8..2).prop_map(Shape::Lock),
        1 => (0u8..2).prop_map(Shape::Unlock),
        calls => (0u8..2).prop_map(Shape::Call),
    ];
    let stmt = leaf.prop_recursive(depth, 24, 4, |inner| {
        prop_oneof![
            (
                prop::collection::vec(inner.clone(), 0..3),
                prop::collection::vec(inner.clone(), 0..3),
                any::<bool>()
            )
                .prop_map(|(t, e, r)| Shape::If(t, e, r)),
            prop::collection::vec(inner.clone(), 0..3).prop_map(Shape::While),
            prop::collection::vec(inner, 0..3).prop_map(Shape::For),
        ]
    });
    prop::collection::vec(stmt, 1..6)
}

fn render_list(out: &mut String, body: &[Shape], depth: usize, returns: bool) {
    for s in body {
        render(out, s, depth, returns);
    }
}

fn render(out: &mut String, s: &Shape, depth: usize, returns: bool) {
    let pad = "    ".repeat(depth);
    match s {
        Shape::Assign(a, b, k) => out.push_str(&format!("{pad}x{a} = x{b} + {k};\n")),
        Shape::Global(g) => out.push_str(&format!("{pad}g{g} = g{g} + x0;\n{pad}arr[x1 % 4] = g{g};\n")),
        Shape::Lock(m) => out.push_str(&format!("{pad}lock(m{m});\n")),
        Shape::Unlock(m) => out.push_str(&format!("{pad}unlock(m{m});\n")),
        Shape::Call(c) => out.push_str(&format!("{pad}h{c}(x0);\n")),
        Shape::If(t, e, ret) => {
            out.push_str(&format!("{pad}if (x0 < x1) {{\n"));
            render_list(out, t, depth + 1, returns);
            if *ret && returns {
                out.push_str(&format!("{pad}    return;\n"));
            }
            if e.is_empty() {
                out.push_str(&format!("{pad}}}\n"));
            } else {
                out.push_str(&format!("{pad}}} else {{\n"));
                render_list(out, e, depth + 1, returns);
                out.push_str(&format!("{pad}}}\n"));
            }
        }
        Shape::While(b) => {
            out.push_str(&format!("{pad}while (x2 < 3) {{\n"));
            render_list(out, b, depth + 1, returns);
            out.push_str(&format!("{pad}    x2 = x2 + 1;\n{pad}}}\n"));
        }
        Shape::For(b) => {
            out.push_str(&format!("{pad}for (x1 = 0; x1 < 2; x1++) {{\n"));
            render_list(out, b, depth + 1, returns);
            out.push_str(&format!("{pad}}}\n"));
        }
    }
}

pub const PRELUDE: &str = "int g0;\nint g1;\nint arr[4];\nlock m0, m1;\n";

/// Source of a function `name` with the given body shape and three locals.
pub fn render_function(name: &str, params: &str, body: &[Shape], returns: bool) -> String {
    let mut out = format!("void {name}({params}) {{\n    int x0 = 0;\n    int x1 = 1;\n    int x2 = 2;\n");
    render_list(&mut out, body, 1, returns);
    out.push_str("}\n");
    out
}

/// A complete single-function program.
pub fn render_program(body: &[Shape]) -> String {
    let mut src = String::from(PRELUDE);
    src.push_str(&render_function("main", "", body, true));
    src
}

/// A program with helpers `h0`, `h1` (leaf bodies) callable from `main`.
pub fn render_program_with_helpers(main: &[Shape], h0: &[Shape], h1: &[Shape]) -> String {
    let mut src = String::from(PRELUDE);
    src.push_str(&render_function("h0", "int p", h0, true));
    src.push_str(&render_function("h1", "int p", h1, true));
    src.push_str(&render_function("main", "", main, true));
    src
}
