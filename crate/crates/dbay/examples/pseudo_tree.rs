//! Constraint graph and pseudo-tree construction: depth-first traversal in
//! ascending agent order, back edges become pseudo-parent relations, and
//! every function is allocated to the deepest agent in its scope.
//!
//! ```bash
//! cargo run --example pseudo_tree
//! ```

use dbay::dcop::{
    allocate_functions, build_constraint_graph, build_pseudo_tree, ContinuousDomain, DcopInstance,
    FunctionKind, Operator, UtilityFunction,
};

fn main() {
    // Five agents; the 0-3 relation skips a level and becomes pseudo.
    let scopes: [&[usize]; 5] = [&[0, 1], &[0, 2], &[2, 3], &[2, 4], &[0, 3]];
    let functions = scopes
        .iter()
        .enumerate()
        .map(|(id, scope)| {
            UtilityFunction::new(
                id,
                scope.to_vec(),
                FunctionKind::Constant(0.0),
                vec![0.0; scope.len()],
            )
        })
        .collect();
    let instance = DcopInstance::with_identity_allocation(
        vec![ContinuousDomain::new(0.0, 1.0).unwrap(); 5],
        functions,
        Operator::Sum,
    )
    .unwrap();

    let graph = build_constraint_graph(&instance);
    println!("edges: {:?}", graph.edges());

    let mut tree = build_pseudo_tree(&graph, 0).unwrap();
    allocate_functions(&instance, &mut tree).unwrap();
    for agent in 0..5 {
        println!(
            "agent {agent}: parent {:?}, children {:?}, pseudo-parents {:?}, functions {:?}",
            tree.parent(agent),
            tree.children(agent),
            tree.pseudo_parents(agent),
            tree.functions_of(agent),
        );
    }
}
