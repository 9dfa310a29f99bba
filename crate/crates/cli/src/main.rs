use clap::Parser;
use seqgraph_cli::{classify, commands, Cli, EXIT_USAGE};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            if usage {
                eprintln!("error kind=usage code={EXIT_USAGE}");
                std::process::exit(EXIT_USAGE);
            }
            return;
        }
    };
    if let Err(err) = commands::run(cli.command) {
        let (kind, code) = classify(&err);
        eprintln!("error: {err:#}");
        eprintln!("error kind={kind} code={code}");
        std::process::exit(code);
    }
}
