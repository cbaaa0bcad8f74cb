//! Coverage away from the n = 4 single-chart comfort zone: larger lattices,
//! the near-integrality of smooth charges, and a two-chart presentation.

use folgauge::cohomology::{cycle_eval, mass, FoliationCycle};
use folgauge::flow::{descend, FlowOptions};
use folgauge::forms::{invariant_project, Cochain, Value};
use folgauge::gauge::{
    embed_abelian, energy_charge, equivariance_residual, random_equivariant_field, LinkOrbits,
};
use folgauge::presentation::{
    build_suspension, preset_p0, preset_p2, preset_p4, ChartSpec, GeneratorSpec, VertexMap,
};

#[test]
fn presets_scale_to_larger_sides() {
    // p2 at n = 6: the translation has order 3
    let p2 = preset_p2(6).unwrap();
    assert_eq!(p2.group_order(), 3);
    assert!(p2.validate().passed());
    assert_eq!(p2.leaf_volume(0, [1, 2, 3, 4]), 3.0);

    // p4 at n = 6: fixed vertices at (x1, x2) in {0, 3}^2
    let p4 = preset_p4(6).unwrap();
    assert!(p4.validate().passed());
    assert_eq!(p4.leaf_volume(0, [0, 0, 1, 2]), 1.0);
    assert_eq!(p4.leaf_volume(0, [3, 3, 1, 2]), 1.0);
    assert_eq!(p4.leaf_volume(0, [1, 0, 0, 0]), 4.0);

    // energy identity on a rough field at n = 6
    let orbits = LinkOrbits::build(&p2);
    let u = random_equivariant_field(&p2, &orbits, 3, 0.1).unwrap();
    let ec = energy_charge(&p2, &orbits, &u).unwrap();
    assert!(ec.identity_residual <= 1e-10);
    assert!(equivariance_residual(&p2, &orbits, &u) <= 1e-12);
}

#[test]
fn smooth_charges_are_near_integers() {
    // abelian embeds carry exactly integer charge at any side
    let p8 = preset_p0(8).unwrap();
    let orbits8 = LinkOrbits::build(&p8);
    let u = embed_abelian(&p8, &orbits8, 1, -1).unwrap();
    let ec = energy_charge(&p8, &orbits8, &u).unwrap();
    assert!((ec.charge - 2.0).abs() <= 0.02 * 2.0, "charge {}", ec.charge);
    assert!(ec.plus_norm_sq <= 1e-10);

    // a cooled configuration at n = 6 lands within 2% of an integer
    let p6 = preset_p0(6).unwrap();
    let orbits6 = LinkOrbits::build(&p6);
    let ab = embed_abelian(&p6, &orbits6, 1, -1).unwrap();
    let noise = random_equivariant_field(&p6, &orbits6, 8, 0.02).unwrap();
    let mut start = ab.clone();
    for (u, n) in start.reps.iter_mut().zip(&noise.reps) {
        *u = n.mul(u);
    }
    let opts = FlowOptions {
        max_iters: 200,
        energy_floor: 1e-10,
        ..FlowOptions::default()
    };
    let res = descend(&p6, &orbits6, &start, &opts).unwrap();
    assert!(res.converged, "stop {:?}", res.stop_reason);
    let k = res.final_energy.charge;
    let near = (k - k.round()).abs();
    assert!(near <= 0.02 * k.round().abs().max(1.0), "charge {k} off-integer by {near}");
}

#[test]
fn two_chart_suspension() {
    // two identical charts glued by a shifted identification in both
    // directions; every leaf meets each chart once
    let chart = ChartSpec {
        extent: [4; 4],
        metric: [1.0; 4],
    };
    let p = build_suspension(
        &[chart.clone(), chart],
        &[GeneratorSpec {
            source_chart: 0,
            target_chart: 1,
            vertex_map: VertexMap::translation([1, 0, 0, 0]),
            bundle_lift: None,
        }],
    )
    .unwrap();
    assert!(p.validate().passed());
    assert_eq!(p.vertex_total(), 512);
    // orbits pair one vertex per chart
    let table = p.cell_orbit_table(0);
    assert_eq!(table.n_orbits(), 256);
    for o in &table.orbits {
        assert_eq!(o.members.len(), 2);
        let charts: Vec<usize> = o.members.iter().map(|&m| p.split_cell(0, m).0).collect();
        assert_eq!(charts.iter().filter(|&&c| c == 0).count(), 1);
    }
    assert_eq!(p.leaf_volume(0, [2, 2, 0, 1]), 2.0);

    // invariant projection averages across the charts
    let mut c = Cochain::zeros(&p, 0, Value::Scalar);
    c.data[p.global_vertex(0, [0, 0, 0, 0])] = 1.0;
    let proj = invariant_project(&p, &c).unwrap();
    assert_eq!(proj.data[p.global_vertex(0, [0, 0, 0, 0])], 0.5);
    assert_eq!(proj.data[p.global_vertex(1, [1, 0, 0, 0])], 0.5);

    // cycles see theta across both charts
    let orbit = table.cells[p.global_vertex(0, [0, 0, 0, 0])].orbit;
    let t = FoliationCycle::new(&p, vec![orbit], vec![2]).unwrap();
    assert_eq!(mass(&p, &t).unwrap(), 4.0);
    let one = Cochain::constant(&p, 0, 1.0);
    assert_eq!(cycle_eval(&p, &t, &one).unwrap(), 4.0);

    // gauge machinery works across charts
    let orbits = LinkOrbits::build(&p);
    assert_eq!(orbits.n_orbits(), 1024);
    let u = random_equivariant_field(&p, &orbits, 4, 0.1).unwrap();
    assert!(equivariance_residual(&p, &orbits, &u) <= 1e-12);
    let ec = energy_charge(&p, &orbits, &u).unwrap();
    assert!(ec.identity_residual <= 1e-10);
}
