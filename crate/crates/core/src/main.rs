use promptlens::cli::{run, Env};

fn main() {
    let code = run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr(), &Env::process());
    std::process::exit(code);
}
