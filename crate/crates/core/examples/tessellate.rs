//! GPS fixes without venue ids become grid-cell locations.

use traj_overlap::geo::{haversine, tessellate, GridSpec, LatLon};

fn main() -> traj_overlap::Result<()> {
    // A short taxi-like trace along a Porto avenue, one fix every 15 s.
    let fixes: Vec<LatLon> = (0..40)
        .map(|i| LatLon::new(41.1496 + i as f64 * 0.0004, -8.6110 + i as f64 * 0.0003))
        .collect::<Result<_, _>>()?;
    let spec = GridSpec::covering(GridSpec::DEFAULT_CELL_SIDE_M, &fixes)?;
    let t = tessellate(&fixes, &spec)?;
    println!("{} fixes -> {} cells of {} m", fixes.len(), t.vocabulary.len(), spec.cell_side_m());
    for (id, loc) in t.vocabulary.iter() {
        let n = t.assignments.iter().filter(|&&a| a == id).count();
        println!("  {id:>3} {:<14} {n:>2} fixes  centre ({:.5}, {:.5})", loc.key, loc.coord.lat(), loc.coord.lon());
    }
    let span = haversine(fixes[0], fixes[fixes.len() - 1]);
    println!("trace length {span:.2} km");
    Ok(())
}
