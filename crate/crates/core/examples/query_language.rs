// Parsing and canonical rendering of phrase queries.

use nwd_lens::{parse_query, render_query, Query};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for input in [
        r#""Huichol" AND "sacred land""#,
        r#""table""#,
        r#""a" AND "b" OR "c""#,
        r#"("a" OR "b") AND "c""#,
        r#"  "a"   AND ( "b" )"#,
    ] {
        let q = parse_query(input)?;
        let canonical = render_query(&q);
        println!("{input:<28} => {canonical}");
        assert_eq!(parse_query(&canonical)?, q);
    }

    let q = Query::and(Query::or(Query::phrase("a")?, Query::phrase("b")?), Query::phrase("c")?);
    assert_eq!(render_query(&q), r#"("a" OR "b") AND "c""#);

    for bad in [r#""a" and "b""#, r#""a" AND"#, r#""open"#, r#""" OR "b""#] {
        let e = parse_query(bad).unwrap_err();
        println!("{bad:<28} !! {e}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
