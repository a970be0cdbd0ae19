#![no_main]
use libfuzzer_sys::fuzz_target;
use sl2c::diagrams::{rewrite_chain, rewrite_star_triangle, Diagram};

fuzz_target!(|data: &str| {
    if let Ok(d) = Diagram::from_json(data) {
        let n = d.normalize();
        let _ = n.canonical_prefactor();
        let _ = d.prefactor_value();
        let vertices: Vec<String> = d.internal_vertices.clone();
        for v in &vertices {
            let _ = rewrite_chain(&d, v);
            let _ = rewrite_star_triangle(&d, v);
        }
    }
});
