use clap::Parser;

use expanderlab_cli::{run, Cli};

fn init_threads() {
    if let Some(n) = std::env::var("EXPANDERLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_threads();
    if let Err(e) = run(cli, &args[1..]) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
