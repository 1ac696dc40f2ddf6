//! Every bundled scenario with its claim and default parameters.

fn main() {
    for entry in bohmian::scenarios::catalog() {
        println!("{:<24} {}", entry.id, entry.claim);
    }
    println!();
    print!("{}", bohmian::cli::list_scenarios(true));
}
