use std::io;

fn main() {
    let code = legendre_ito::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
