fn main() {
    std::process::exit(snapcluster::cli::main());
}
