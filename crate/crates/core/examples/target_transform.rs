//! Rank transform with min-max scaling, and its inverse.

use qscore::train::ColumnTransform;

fn main() -> anyhow::Result<()> {
    let column = [0.3, 0.1, 0.3, 0.9, 0.6, 0.6, 0.6, 1.0];
    let t = ColumnTransform::fit(&column)?;
    println!("{:>6} {:>8}", "raw", "scaled");
    for x in column {
        println!("{x:>6} {:>8.4}", t.apply(x));
    }

    println!("\nunseen values interpolate and clamp:");
    for x in [-1.0, 0.2, 0.75, 2.0] {
        println!("{x:>6} {:>8.4}", t.apply(x));
    }

    println!("\ninverse maps to the nearest training value:");
    for y in [0.0, 0.4, 0.5, 0.97] {
        println!("{y:>6} -> {}", t.invert(y));
    }

    let constant = ColumnTransform::fit(&[0.5, 0.5, 0.5])?;
    println!("\nconstant column degenerate: {}, maps to {}", constant.is_degenerate(), constant.apply(0.5));
    Ok(())
}
