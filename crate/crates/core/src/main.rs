fn main() -> std::process::ExitCode {
    swarm::cli::run()
}
