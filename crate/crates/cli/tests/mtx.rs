use nalgebra::DMatrix;
use ssr_cli::mtx::{parse_matrix_market, MtxError};

#[test]
fn coordinate_general() {
    let a = parse_matrix_market(
        "%%MatrixMarket matrix coordinate real general\n% comment\n2 3 3\n1 1 1.5\n2 3 -2\n1 2 4e-1\n",
    )
    .unwrap();
    assert_eq!(a, DMatrix::from_row_slice(2, 3, &[1.5, 0.4, 0.0, 0.0, 0.0, -2.0]));
}

#[test]
fn coordinate_symmetric_mirrors() {
    let a = parse_matrix_market("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n").unwrap();
    assert_eq!(a, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
}

#[test]
fn array_is_column_major() {
    let a = parse_matrix_market("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n").unwrap();
    assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
    let s = parse_matrix_market("%%MatrixMarket matrix array integer symmetric\n2 2\n1\n2\n3\n").unwrap();
    assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
}

fn line_of(text: &str) -> usize {
    match parse_matrix_market(text) {
        Err(MtxError::Syntax { line, .. }) => line,
        other => panic!("expected a syntax error, got {other:?}"),
    }
}

#[test]
fn errors_carry_line_numbers() {
    assert_eq!(line_of("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1\n"), 1);
    assert_eq!(line_of("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n"), 3);
    assert_eq!(line_of("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 x\n2 2 1\n"), 3);
    assert_eq!(line_of("%%MatrixMarket matrix coordinate real general\n%\n2 2 2\n1 1 1\n"), 3);
    assert_eq!(line_of("%%MatrixMarket matrix array real general\n1 1\n1\n2\n"), 4);
    assert_eq!(line_of("%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n"), 2);
}
