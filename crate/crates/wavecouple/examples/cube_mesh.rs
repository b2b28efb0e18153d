//! Build a structured cube mesh, inspect its quality, and round-trip it
//! through the wcmesh file format.

use wavecouple::mesh::{load_wcmesh, make_cube_mesh, mesh_stats, save_wcmesh};
use wavecouple::Result;

fn main() -> Result<()> {
    let mesh = make_cube_mesh(4, 1.0)?;
    let stats = mesh_stats(&mesh);
    println!("vertices: {}", mesh.vertices.len());
    println!("tets:     {}", mesh.tets.len());
    println!("volume:   {:.6}", mesh.volume());
    println!("h range:  [{:.4}, {:.4}]", stats.h_min, stats.h_max);
    println!("quality:  {:.4}", stats.quality);

    let dir = std::env::temp_dir().join("wavecouple_cube_mesh");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("cube.wcmesh");
    save_wcmesh(&mesh, &path)?;
    let reloaded = load_wcmesh(&path)?;
    assert_eq!(reloaded.vertices.len(), mesh.vertices.len());
    assert_eq!(reloaded.tets.len(), mesh.tets.len());
    let max_shift = mesh
        .vertices
        .iter()
        .zip(&reloaded.vertices)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    println!("round-trip wrote {} and read it back", path.display());
    println!("max vertex shift after reload: {max_shift:.3e}");
    Ok(())
}
