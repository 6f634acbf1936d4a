use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use pciscan::engine::{scan_many, ScanConfig, ServicePorts, TargetSpec};
use pciscan::net::Timeouts;
use pciscan::reporting::{aggregate, parse_reports_json, render_reports, ReportFormat};
use pciscan::TestCase;
use pciscan_cli::{exit_code, parse_targets, EXIT_USAGE};
use pciscan_testbed::{spawn_testbed, TestbedConfig};

#[derive(Parser)]
#[command(name = "pciscan", version, about = "Non-intrusive external compliance scanner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan one or more hosts.
    Scan(ScanArgs),
    /// Run the vulnerable testbed in the foreground.
    Testbed {
        #[arg(long)]
        config: PathBuf,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summarise JSON reports from earlier scans.
    Aggregate {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ScanArgs {
    targets: Vec<String>,
    /// Read targets from a file, one per line.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long, default_value = "human")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Connection budget per target.
    #[arg(long, default_value_t = 20)]
    budget: u32,
    /// Targets scanned at once.
    #[arg(long, default_value_t = 4)]
    parallel: usize,
    #[arg(long, default_value_t = 22)]
    ssh_port: u16,
    #[arg(long, default_value_t = 3306)]
    mysql_port: u16,
    #[arg(long, default_value_t = 80)]
    http_port: u16,
    #[arg(long, default_value_t = 443)]
    https_port: u16,
    /// Connect and read timeout in milliseconds.
    #[arg(long, default_value_t = 3000)]
    timeout_ms: u64,
    /// Pause between probes against one host, in milliseconds.
    #[arg(long, default_value_t = 100)]
    delay_ms: u64,
    #[arg(long, default_value_t = 10)]
    max_redirects: u32,
    #[arg(long, default_value_t = 3)]
    max_dirs: u32,
    /// Case numbers to skip, comma separated.
    #[arg(long, value_delimiter = ',')]
    skip: Vec<u8>,
    /// Offer triple-DES suites in the weak-cipher probe as well.
    #[arg(long)]
    include_3des: bool,
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("pciscan: {msg}");
    ExitCode::from(EXIT_USAGE as u8)
}

fn run_scan(args: ScanArgs) -> ExitCode {
    let format: ReportFormat = match args.format.parse() {
        Ok(f) => f,
        Err(e) => return usage(e),
    };
    let text = match &args.file {
        Some(path) if args.targets.is_empty() => match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        },
        Some(_) => return usage("give targets either inline or with --file, not both"),
        None => args.targets.join("\n"),
    };
    let hosts = match parse_targets(&text) {
        Ok(h) => h,
        Err(e) => return usage(e),
    };
    let mut enabled: BTreeSet<TestCase> = TestCase::ALL.into_iter().collect();
    for id in &args.skip {
        match TestCase::from_id(*id) {
            Some(c) => {
                enabled.remove(&c);
            }
            None => return usage(format!("unknown case {id}")),
        }
    }
    let timeout = Duration::from_millis(args.timeout_ms);
    let config = ScanConfig {
        timeouts: Timeouts { connect: timeout, read: timeout },
        max_redirect_depth: args.max_redirects,
        max_dir_probes: args.max_dirs,
        connection_budget: args.budget,
        parallel_targets: args.parallel,
        enabled_cases: enabled,
        politeness_delay: Duration::from_millis(args.delay_ms),
        ports: ServicePorts { ssh: args.ssh_port, mysql: args.mysql_port, http: args.http_port, https: args.https_port },
        weak_cipher_include_3des: args.include_3des,
        ..ScanConfig::default()
    };
    let targets: Vec<TargetSpec> = hosts.iter().map(|h| TargetSpec::new(h.as_str())).collect();
    let reports = match scan_many(&targets, &config) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };
    let bytes = match render_reports(&reports, format) {
        Ok(b) => b,
        Err(e) => return usage(e),
    };
    let written = match &args.out {
        Some(path) => fs::write(path, &bytes),
        None => std::io::stdout().write_all(&bytes),
    };
    if let Err(e) = written {
        return usage(format!("writing report: {e}"));
    }
    ExitCode::from(exit_code(&reports) as u8)
}

fn run_testbed(path: PathBuf, print_only: bool) -> ExitCode {
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return usage(format!("{}: {e}", path.display())),
    };
    let config: TestbedConfig = match text.parse() {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    if print_only {
        print!("{config}");
        return ExitCode::SUCCESS;
    }
    let bed = match spawn_testbed(config) {
        Ok(b) => b,
        Err(e) => return usage(e),
    };
    let p = bed.ports();
    println!("testbed up on 127.0.0.1: http {} https {} mysql {} ssh {}", p.http, p.https, p.mysql, p.ssh);
    println!(
        "scan with: pciscan scan localhost --http-port {} --https-port {} --mysql-port {} --ssh-port {}",
        p.http, p.https, p.mysql, p.ssh
    );
    let mut shown = 0;
    loop {
        std::thread::sleep(Duration::from_millis(500));
        // Entries are printed once their handler has filled in the summary.
        for e in bed.access_log().iter().skip(shown).take_while(|e| !e.summary.is_empty()) {
            println!("{} {:>5} {:<5} {} {}", e.at.to_rfc3339(), e.port, e.service.name(), e.peer, e.summary);
            shown += 1;
        }
    }
}

fn run_aggregate(paths: Vec<PathBuf>) -> ExitCode {
    let mut reports = Vec::new();
    for path in paths {
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
        match parse_reports_json(&bytes) {
            Ok(r) => reports.extend(r),
            Err(e) => return usage(format!("{}: {e}", path.display())),
        }
    }
    if reports.is_empty() {
        return usage("no reports to aggregate");
    }
    print!("{}", aggregate(&reports).render());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match cli.command {
        Command::Scan(args) => run_scan(args),
        Command::Testbed { config, print_config } => run_testbed(config, print_config),
        Command::Aggregate { reports } => run_aggregate(reports),
    }
}
