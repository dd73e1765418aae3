use clap::Parser;
use hypmap_cli::args::{Cli, Command, DEFAULT_PORT};
use hypmap_cli::commands::{cmd_compare, cmd_run, cmd_sweep, cmd_verify, resolve, CommandError};

fn main() {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, &mut out),
        Command::Verify { suite, seed } => cmd_verify(suite, *seed, &mut out),
        Command::Sweep { config, ells, stepsizes } => cmd_sweep(config, ells, stepsizes, &mut out),
        Command::Compare { config, ells, methods } => cmd_compare(config, ells, methods, &mut out),
        Command::Serve(args) => serve(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn serve(args: &hypmap_cli::args::ConfigArgs) -> Result<(), CommandError> {
    let config = resolve(args)?;
    let port = config.port.unwrap_or(DEFAULT_PORT);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(hypmap_cli::serve::serve(config, port))
        .map_err(|e| CommandError::Failed(format!("cannot serve on port {port}: {e}")))
}
