fn main() {
    let code = gatrec::cli::run_command(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
