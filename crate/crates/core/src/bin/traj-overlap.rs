fn main() {
    std::process::exit(traj_overlap::cli::main_with_args(std::env::args().collect()));
}
