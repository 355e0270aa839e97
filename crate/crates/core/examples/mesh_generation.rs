//! Builds each initial surface, prints its size and element quality, checks
//! the admissibility conditions and writes it out.
//!
//! Usage: `cargo run --release --example mesh_generation -- [output_dir]`

use std::path::PathBuf;

use geoflow::mesh::{
    check_admissible, dumbbell_grid_for_target, gen_cuboid, gen_dumbbell, gen_hemisphere, gen_icosphere, mesh_quality,
    save_mesh, MeshFormat, SurfaceMesh,
};

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "meshes".into()));
    std::fs::create_dir_all(&dir).expect("output directory");
    let (nt, np) = dumbbell_grid_for_target(1078);
    let shapes: Vec<(&str, SurfaceMesh)> = vec![
        ("icosphere_s4", gen_icosphere(4, 1.0)),
        ("hemisphere_s3", gen_hemisphere(3, 1.0)),
        ("dumbbell", gen_dumbbell(nt, np).expect("dumbbell")),
        ("cuboid_1x1x8", gen_cuboid(1.0, 1.0, 8.0, 0.2, false).expect("cuboid")),
        ("openbox_1x6x1", gen_cuboid(1.0, 6.0, 1.0, 0.2, true).expect("open box")),
    ];
    println!("{:<14} {:>6} {:>6} {:>9} {:>9} {:>5} {:>5}", "mesh", "verts", "tris", "area", "sigma_max", "loops", "ok");
    for (name, mesh) in shapes {
        let q = mesh_quality(&mesh);
        let adm = check_admissible(&mesh);
        println!(
            "{name:<14} {:>6} {:>6} {:>9.4} {:>9.3} {:>5} {:>5}",
            mesh.num_vertices(),
            mesh.num_triangles(),
            mesh.surface_area(),
            q.sigma_max,
            mesh.boundary_loops().len(),
            adm.passes()
        );
        save_mesh(&mesh, &dir.join(format!("{name}.off")), MeshFormat::Off).expect("write mesh");
    }
    println!("wrote {}", dir.display());
}
