use clap::Parser;

fn main() {
    let cli = match etaxi::cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            // usage errors are configuration errors; keep the reason on one line
            let text = e.to_string();
            let reason: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error: config: {}", reason.join(" ").trim_start_matches("error: "));
            std::process::exit(1);
        }
    };
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = etaxi::cli::run(cli, &mut stdout) {
        eprintln!("error: {}", e.to_string().replace('\n', " "));
        std::process::exit(e.exit_code());
    }
}
