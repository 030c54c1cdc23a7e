//! Cone distances between weighted points `(x, r)`: how mass and position
//! trade off under each unbalanced setting.

use uot::cone::{cone_cost, cone_distance, ConePoint, ConeSetting};

fn main() -> uot::Result<()> {
    let settings = [
        ("gaussian-hellinger", ConeSetting::GaussianHellinger { rho: 0.5 }),
        ("wfr", ConeSetting::Wfr),
        ("power(k=3)", ConeSetting::Power { k: 3.0, rho: 0.5 }),
        ("partial(q=1)", ConeSetting::Partial { rho: 0.5, q: 1.0 }),
    ];
    let origin = ConePoint::new(vec![0.0], 1.0)?;
    let apex = ConePoint::new(vec![0.0], 0.0)?;
    println!("{:<20} {:>8} {:>10} {:>10}", "setting", "d", "cost", "distance");
    for (name, s) in settings {
        for d in [0.0, 0.5, 1.0, 2.0] {
            let far = ConePoint::new(vec![d], 1.0)?;
            println!(
                "{name:<20} {d:>8} {:>10.5} {:>10.5}",
                cone_cost(s, d, 1.0, 1.0)?,
                cone_distance(s, &origin, &far)?
            );
        }
        println!("{name:<20} {:>8} {:>10} {:>10.5}", "apex", "", cone_distance(s, &origin, &apex)?);
    }
    Ok(())
}
