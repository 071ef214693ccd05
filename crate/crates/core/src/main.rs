fn main() {
    std::process::exit(dockbench::cli::main());
}
