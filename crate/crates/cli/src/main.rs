fn main() {
    std::process::exit(kerdisc_cli::run(std::env::args_os()));
}
