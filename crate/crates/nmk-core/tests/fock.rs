use nmk_core::chain::ChainCoefficients;
use nmk_core::fock::{
    build_hamiltonian, build_hamiltonian_parts, embed_state, enumerate_basis, enumerate_basis_with_cap,
    hamiltonian_norm_estimate, ladder, product_state, project_particle_sector, reduced_density, system_operator,
    BasisLabel, BathState, HamiltonianTerm, InitialEnvState, JumpOperator, SystemModel, TimeProfile,
};
use nmk_core::linalg::{norm, CMat};
use nmk_core::{Error, C64};
use proptest::prelude::*;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pauli_z() -> CMat {
    CMat::from_real(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

fn pauli_x() -> CMat {
    CMat::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

/// `|0⟩⟨1|`: index 1 is the excited level.
fn lowering() -> CMat {
    CMat::from_real(2, &[0.0, 1.0, 0.0, 0.0]).unwrap()
}

fn qubit_model(h: CMat, l: CMat, profile: TimeProfile) -> SystemModel {
    SystemModel::new(
        1,
        2,
        vec![HamiltonianTerm { support: vec![0], matrix: h, profile }],
        vec![JumpOperator { support: vec![0], matrix: l, bath: 0 }],
    )
    .unwrap()
}

fn chain2() -> ChainCoefficients {
    ChainCoefficients { onsite: vec![0.3, -0.2], hopping: vec![0.8], v_norm: 0.7, omega_c: 1.0 }
}

#[test]
fn dimension_examples() {
    assert_eq!(enumerate_basis(1, 2, 1, 1, 1).unwrap().dim(), 4);
    assert_eq!(enumerate_basis(1, 2, 1, 2, 2).unwrap().dim(), 12);
    assert_eq!(enumerate_basis(2, 2, 2, 1, 1).unwrap().dim(), 16);
    assert_eq!(enumerate_basis(1, 2, 1, 3, 0).unwrap().dim(), 2);
    let space = enumerate_basis(1, 2, 1, 2, 2).unwrap();
    assert_eq!(space.bath_states()[0], vec![0, 0]);
    assert!(space.bath_states().windows(2).all(|w| w[0] < w[1]));
    assert!(matches!(enumerate_basis_with_cap(2, 2, 2, 8, 4, 1000), Err(Error::DimensionOverflow { .. })));
    assert!(matches!(enumerate_basis(30, 4, 4, 40, 10), Err(Error::DimensionOverflow { .. })));
    assert!(enumerate_basis(1, 2, 0, 1, 1).is_err());
}

#[test]
fn index_round_trip() {
    let space = enumerate_basis(2, 3, 2, 4, 3).unwrap();
    assert_eq!(space.dim(), 9 * 35 * 35);
    for i in 0..space.dim() {
        assert_eq!(space.index(&space.label(i)), Some(i));
    }
    let label = BasisLabel { system: vec![1, 0], baths: vec![vec![0, 0, 0, 0], vec![0, 0, 0, 1]] };
    assert_eq!(space.index(&label), Some(3 * 35 * 35 + 1));
    let bad = BasisLabel { system: vec![1, 0], baths: vec![vec![4, 0, 0, 0], vec![0, 0, 0, 0]] };
    assert_eq!(space.index(&bad), None);
}

#[test]
fn ladder_matrix_elements() {
    let space = enumerate_basis(1, 2, 1, 2, 4).unwrap();
    let lower = ladder(&space, 0, 0, false).unwrap();
    let raise = ladder(&space, 0, 0, true).unwrap();
    let idx = |sys: usize, occ: Vec<u8>| space.index(&BasisLabel { system: vec![sys], baths: vec![occ] }).unwrap();

    let mut vac = vec![C64::new(0.0, 0.0); space.dim()];
    vac[idx(0, vec![0, 0])] = c(1.0);
    assert_eq!(norm(&lower.matvec(&vac)), 0.0);

    assert!((lower.get(idx(1, vec![1, 1]), idx(1, vec![2, 1])) - c(2f64.sqrt())).norm() < 1e-15);
    let number = raise.mul(&lower).unwrap();
    assert!((number.get(idx(0, vec![3, 1]), idx(0, vec![3, 1])) - c(3.0)).norm() < 1e-14);

    assert!((&raise.to_dense() - &lower.adjoint().to_dense()).frobenius() < 1e-15);
    let top = idx(0, vec![2, 2]);
    assert!(raise.row(top).next().is_none() || raise.entries().all(|(_, col, _)| col != top));
    assert!(ladder(&space, 1, 0, true).is_err());
    assert!(ladder(&space, 0, 2, true).is_err());
}

#[test]
fn canonical_commutator_on_the_interior() {
    let space = enumerate_basis(1, 2, 2, 3, 3).unwrap();
    for (alpha, j) in [(0, 0), (0, 2), (1, 1)] {
        for (beta, k) in [(0, 0), (0, 1), (1, 1)] {
            let a = ladder(&space, alpha, j, false).unwrap();
            let ad = ladder(&space, beta, k, true).unwrap();
            let comm = a.mul(&ad).unwrap().sub(&ad.mul(&a).unwrap()).unwrap().to_dense();
            let kron = if (alpha, j) == (beta, k) { 1.0 } else { 0.0 };
            for r in 0..space.dim() {
                if space.bath_total(r, 0) >= space.cap() || space.bath_total(r, 1) >= space.cap() {
                    continue;
                }
                for col in 0..space.dim() {
                    let e = if r == col { kron } else { 0.0 };
                    assert!((comm.get(r, col) - c(e)).norm() < 1e-13);
                }
            }
        }
    }
}

#[test]
fn zero_coupling_hamiltonian_is_system_only() {
    let model = qubit_model(pauli_z().scale(c(0.5)), lowering(), TimeProfile::Constant);
    let zero_chain = ChainCoefficients { onsite: vec![0.0, 0.0], hopping: vec![0.0], v_norm: 0.0, omega_c: 1.0 };
    let space = enumerate_basis(1, 2, 1, 2, 2).unwrap();
    let h = build_hamiltonian(&model, &[zero_chain], &space, 0.0).unwrap().to_dense();
    let expected = pauli_z().scale(c(0.5)).kron(&CMat::identity(space.env_dim()));
    assert!((&h - &expected).frobenius() < 1e-15);
}

#[test]
fn single_mode_coupling_element() {
    let model = qubit_model(pauli_z().scale(c(0.5)), lowering(), TimeProfile::Constant);
    let chain = ChainCoefficients { onsite: vec![0.4], hopping: vec![], v_norm: 0.6, omega_c: 1.0 };
    let space = enumerate_basis(1, 2, 1, 1, 1).unwrap();
    let h = build_hamiltonian(&model, &[chain], &space, 0.0).unwrap();
    let idx = |s: usize, n: u8| space.index(&BasisLabel { system: vec![s], baths: vec![vec![n]] }).unwrap();
    assert!((h.get(idx(0, 1), idx(1, 0)) - c(0.6)).norm() < 1e-15);
    assert!((h.get(idx(1, 0), idx(0, 1)) - c(0.6)).norm() < 1e-15);
    assert!((h.get(idx(0, 1), idx(0, 1)) - c(0.5 + 0.4)).norm() < 1e-15);
    assert!((h.get(idx(1, 0), idx(1, 0)) - c(-0.5)).norm() < 1e-15);
    assert!(h.get(idx(1, 1), idx(0, 0)).norm() == 0.0);
}

#[test]
fn gershgorin_below_norm_estimate_and_sparsity() {
    let model = qubit_model(pauli_x().scale(c(0.9)), lowering(), TimeProfile::Constant);
    let chains = [chain2()];
    let space = enumerate_basis(1, 2, 1, 2, 2).unwrap();
    assert_eq!(space.dim(), 12);
    let h = build_hamiltonian(&model, &chains, &space, 0.0).unwrap();
    let gersh = h.gershgorin_bound();
    let estimate = hamiltonian_norm_estimate(&model, &chains, &space, 0.0);
    assert!(gersh <= estimate, "{gersh} > {estimate}");
    assert!(h.to_dense().op_norm() <= gersh + 1e-12);
    assert!(h.max_row_nnz() <= 1 + 2 + 2 * 2);
    assert!(h.hermiticity_defect() < 1e-15);
}

#[test]
fn time_dependent_hamiltonian_is_hermitian() {
    let drive = TimeProfile::Cosine { omega: 1.3, phase: 0.2 };
    let model = SystemModel::new(
        2,
        2,
        vec![
            HamiltonianTerm { support: vec![0], matrix: pauli_z(), profile: TimeProfile::Constant },
            HamiltonianTerm { support: vec![1, 0], matrix: pauli_x().kron(&pauli_x()), profile: drive },
        ],
        vec![
            JumpOperator { support: vec![0], matrix: lowering(), bath: 0 },
            JumpOperator { support: vec![1], matrix: pauli_x(), bath: 1 },
        ],
    )
    .unwrap();
    let space = enumerate_basis(2, 2, 2, 2, 1).unwrap();
    let h = build_hamiltonian_parts(&model, &[chain2(), chain2()], &space).unwrap();
    assert!(!h.is_time_independent());
    let bath_part = |t: f64| {
        let sys = model.system_hamiltonian(t).kron(&CMat::identity(space.env_dim()));
        &h.at(t).to_dense() - &sys
    };
    let reference = bath_part(0.0);
    for t in [0.37, 2.0, 5.5] {
        assert!(h.at(t).hermiticity_defect() < 1e-14);
        assert!((&bath_part(t) - &reference).frobenius() < 1e-13);
    }
    let wrong = enumerate_basis(2, 2, 2, 3, 1).unwrap();
    assert!(matches!(build_hamiltonian_parts(&model, &[chain2(), chain2()], &wrong), Err(Error::ShapeMismatch(_))));
}

#[test]
fn local_embedding_orders_qudit_zero_first() {
    let space = enumerate_basis(2, 2, 1, 1, 0).unwrap();
    let op = system_operator(&space, &[0], &pauli_x()).unwrap().to_dense();
    assert_eq!(op.get(2, 0), c(1.0));
    assert_eq!(op.get(1, 0), c(0.0));
    let swapped = system_operator(&space, &[1, 0], &lowering().kron(&CMat::identity(2))).unwrap().to_dense();
    assert_eq!(swapped.get(0, 1), c(1.0));
}

#[test]
fn particle_projector_examples() {
    let space = enumerate_basis(1, 2, 1, 2, 2).unwrap();
    let mut vac = vec![C64::new(0.0, 0.0); space.dim()];
    vac[0] = c(1.0);
    assert_eq!(project_particle_sector(&space, &vac, 0), vac);

    let amps: Vec<C64> = (0..space.dim()).map(|i| C64::new(i as f64, 1.0)).collect();
    assert_eq!(project_particle_sector(&space, &amps, 2), amps);

    let idx = |occ: Vec<u8>| space.index(&BasisLabel { system: vec![1], baths: vec![occ] }).unwrap();
    let mut half = vec![C64::new(0.0, 0.0); space.dim()];
    half[idx(vec![1, 0])] = c(0.5f64.sqrt());
    half[idx(vec![1, 1])] = C64::new(0.0, 0.5f64.sqrt());
    let p = project_particle_sector(&space, &half, 1);
    assert!((norm(&p).powi(2) - 0.5).abs() < 1e-15);
    assert_eq!(project_particle_sector(&space, &p, 1), p);
}

#[test]
fn product_states_and_reduced_density() {
    let space = enumerate_basis(1, 2, 1, 3, 2).unwrap();
    let plus = [c(0.5f64.sqrt()), c(0.5f64.sqrt())];
    let amplitudes = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.48), c(0.0)];
    let env = InitialEnvState { baths: vec![BathState::SinglePhoton { amplitudes, constants: None }] };
    let (psi, prepared) = product_state(&space, &plus, &env).unwrap();
    assert!((norm(&psi) - 1.0).abs() < 1e-14);
    assert!((prepared[0].initialization_error - (2.0 - 2.0 * 0.6f64.hypot(0.48)).sqrt()).abs() < 1e-14);
    let rho = reduced_density(&space, &psi);
    assert!((rho.get(0, 1) - c(0.5)).norm() < 1e-14);

    let coherent = BathState::Coherent { displacement: vec![c(0.3), c(0.0), C64::new(0.0, 0.2)] };
    let prepared = coherent.prepare(&space).unwrap();
    assert!((norm(&prepared.vector) - 1.0).abs() < 1e-14);
    assert!(prepared.initialization_error > 0.0 && prepared.initialization_error < 0.05);
    assert!((prepared.moments.0 - 0.13).abs() < 0.01);

    let (vac, _) = product_state(&space, &plus, &InitialEnvState::vacuum(1)).unwrap();
    let bigger = enumerate_basis(1, 2, 1, 3, 4).unwrap();
    let lifted = embed_state(&space, &bigger, &vac).unwrap();
    assert_eq!(lifted[0], vac[0]);
    assert!((norm(&lifted) - 1.0).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn hamiltonian_hermitian_for_random_chains(
        onsite in proptest::collection::vec(-1.0f64..1.0, 3),
        hopping in proptest::collection::vec(0.0f64..1.0, 2),
        v in 0.0f64..2.0,
        t in 0.0f64..10.0,
        cap in 0usize..4,
    ) {
        let model = qubit_model(pauli_z(), pauli_x(), TimeProfile::Ramp { rate: 0.3 });
        let chain = ChainCoefficients { onsite, hopping, v_norm: v, omega_c: 1.0 };
        let space = enumerate_basis(1, 2, 1, 3, cap).unwrap();
        let h = build_hamiltonian(&model, std::slice::from_ref(&chain), &space, t).unwrap();
        prop_assert!(h.hermiticity_defect() < 1e-13);
        prop_assert!(h.gershgorin_bound() <= hamiltonian_norm_estimate(&model, &[chain], &space, t) + 1e-12);
    }
}
