mod support;

use miniomp_core::diag::CompileError;
use miniomp_core::frontend::{parse, parse_source, print_program, tokenize, TokenKind};

#[test]
fn corpus_round_trips_through_the_printer() {
    for (name, src) in support::corpus() {
        let mut first = parse_source(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = print_program(&first);
        let mut second = parse_source(&printed).unwrap_or_else(|e| panic!("{name} reprint: {e}\n{printed}"));
        first.clear_positions();
        second.clear_positions();
        assert_eq!(first, second, "{name}");
        assert_eq!(print_program(&second), printed, "{name}: printing is not a fixed point");
    }
}

#[test]
fn broken_inputs_report_the_offending_position() {
    let cases: &[(&str, u32, u32)] = &[
        ("fn main() {\n  let x: int = 1 $ 2;\n}", 2, 18),
        ("fn main() {\n  print(1;\n}", 2, 10),
        ("fn main() {\n  let = 3;\n}", 2, 7),
        ("fn main() {\n  x = 1.5e;\n}", 2, 7),
        ("fn main() {\n  if true { }\n  else\n}", 4, 1),
        ("fn main()\n  print(1);", 2, 3),
        ("fn f(a: [int) {}", 1, 13),
        ("extern cobol fn g();", 1, 8),
        ("fn main() {\n  for i in 0..3 step { }\n}", 2, 22),
        ("fn main() {\n  let a: [int; 3] = 4;\n}", 2, 19),
    ];
    for &(src, line, column) in cases {
        let diags = match tokenize(src) {
            Err(d) => vec![d],
            Ok(tokens) => parse(&tokens).expect_err(src).0,
        };
        let d = &diags[0];
        assert!(
            matches!(d.error, CompileError::Lex(_) | CompileError::Parse(_)),
            "{src:?}: {d}"
        );
        assert_eq!((d.pos.line, d.pos.column), (line, column), "{src:?}: {d}");
    }
}

fn count_attached(stmts: &[miniomp_core::frontend::ast::Stmt]) -> usize {
    use miniomp_core::frontend::ast::StmtKind;
    stmts
        .iter()
        .map(|s| {
            s.directives.len()
                + match &s.kind {
                    StmtKind::If {
                        then_block, else_block, ..
                    } => {
                        count_attached(&then_block.stmts) + else_block.as_ref().map_or(0, |b| count_attached(&b.stmts))
                    }
                    StmtKind::While { body, .. } | StmtKind::For { body, .. } | StmtKind::Block(body) => {
                        count_attached(&body.stmts)
                    }
                    _ => 0,
                }
        })
        .sum()
}

#[test]
fn every_directive_comment_is_attached_or_reported() {
    let mut sources: Vec<String> = support::corpus().into_iter().map(|(_, s)| s).collect();
    sources.push("fn main() {\n//#omp parallel\n//#omp for\n{ print(1); }\n}".into());
    sources.push("fn main() {\n  { print(1);\n//#omp parallel\n  }\n//#omp parallel\n}".into());
    sources.push("fn main() {\n//#omp parallel\n\n\n  print(2);\n}".into());
    for src in sources {
        let tokens = tokenize(&src).unwrap();
        let comments = tokens.iter().filter(|t| t.kind == TokenKind::DirectiveComment).count();
        let (attached, dangling) = match parse(&tokens) {
            Ok(p) => (p.functions.iter().map(|f| count_attached(&f.body.stmts)).sum(), 0),
            Err(d) => (
                0,
                d.iter()
                    .filter(|d| matches!(d.error, CompileError::DanglingDirective(_)))
                    .count(),
            ),
        };
        if attached + dangling != comments {
            panic!("{comments} comments, {attached} attached, {dangling} dangling in\n{src}");
        }
    }
}
