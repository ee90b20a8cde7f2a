//! Builds the signed bipartite graph for a tiny rating set and prints each
//! node's attention neighborhood and the edge list.
//!
//! ```text
//! cargo run -p gatrec --example signed_graph
//! ```

use gatrec::dataset::Interaction;
use gatrec::graph::build_graph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ratings = [
        Interaction::new(1, 10, 5, 1),
        Interaction::new(1, 11, 1, 2),
        Interaction::new(2, 11, 4, 3),
        Interaction::new(2, 12, 5, 4),
        Interaction::new(2, 13, 3, 5),
        Interaction::new(3, 12, 2, 6),
        Interaction::new(3, 13, 4, 7),
    ];
    let graph = build_graph(&ratings)?;
    let idx = graph.node_index();
    println!("{} users, {} items, {} edges (rating 3 dropped)", idx.num_users(), idx.num_items(), graph.edges().len());
    for node in 0..graph.num_nodes() {
        let name = match idx.user_id(node) {
            Some(u) => format!("user {u}"),
            None => format!("item {}", idx.item_id(node).unwrap()),
        };
        let slots: Vec<String> = graph
            .neighbors(node)?
            .iter()
            .map(|(n, s)| format!("{n}{}", if *s == gatrec::graph::Sign::Positive { "+" } else { "-" }))
            .collect();
        println!("node {node} ({name}): [{}]", slots.join(" "));
    }
    println!("\nuser\titem\tsign\trating");
    graph.write_edge_tsv(std::io::stdout().lock())?;
    Ok(())
}
