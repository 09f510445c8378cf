use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vxa_container::Archive;
use vxar::{aggregate_exit, CliError, EntryOutcome, ExtractPolicy, DEFAULT_FUEL, DEFAULT_MEM_LIMIT, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "vxar", version, about = "Archives that carry their own decoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct VmArgs {
    /// Instruction budget per decoded stream.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    /// Guest address space in bytes.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_MEM_LIMIT)]
    mem_limit: u64,
    /// Show decoder diagnostics.
    #[arg(long)]
    verbose: bool,
    /// Interpret every instruction without the fragment cache.
    #[arg(long)]
    no_cache: bool,
}

impl VmArgs {
    fn policy(self) -> ExtractPolicy {
        ExtractPolicy {
            fuel: self.fuel,
            mem_limit: self.mem_limit,
            verbose: self.verbose,
            no_cache: self.no_cache,
            ..ExtractPolicy::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create an archive from files and directories.
    #[cfg(feature = "vm")]
    Add {
        archive: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Use this codec instead of recognizing the file type.
        #[arg(long, value_name = "NAME")]
        codec: Option<String>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        vm: VmArgs,
    },
    /// List archived files.
    List {
        archive: PathBuf,
        /// Include decoder pseudo-files.
        #[arg(long)]
        show_pseudo: bool,
        #[arg(long)]
        json: bool,
    },
    /// Extract files, decoding them with the archived decoders.
    Extract {
        archive: PathBuf,
        /// Entries to extract; all when omitted.
        names: Vec<String>,
        /// Output directory.
        #[arg(short = 'C', long = "output", default_value = ".")]
        output: PathBuf,
        /// Also decode stored entries that carry a decoder.
        #[arg(long)]
        decode_all: bool,
        /// Use host decoders for methods 8 and 9.
        #[cfg(feature = "native")]
        #[arg(long)]
        native: bool,
        /// Keep one VM per decoder across files.
        #[arg(long)]
        reuse_vm: bool,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        vm: VmArgs,
    },
    /// Verify every entry with its archived decoder.
    Test {
        archive: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        vm: VmArgs,
    },
    /// Measure decoding cost and decoder storage overhead.
    #[cfg(feature = "vm")]
    Bench {
        archive: PathBuf,
        #[arg(long, default_value_t = 3)]
        repetitions: u32,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        vm: VmArgs,
    },
    /// Assemble a decoder source file into an image.
    #[cfg(feature = "vm")]
    Asm {
        source: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run an image as a filter from stdin to stdout.
    #[cfg(feature = "vm")]
    Run {
        image: PathBuf,
        #[command(flatten)]
        vm: VmArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("vxar: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn report(outcomes: &[EntryOutcome], json: bool, verb: &str) -> u8 {
    if json {
        print_json(&outcomes);
    } else {
        for o in outcomes {
            match &o.error {
                None => println!("{verb:<8} {}", o.name),
                Some(err) => eprintln!("FAILED   {}: [{}] {err}", o.name, o.class.unwrap_or("")),
            }
        }
    }
    aggregate_exit(outcomes)
}

fn dispatch(command: Command) -> Result<u8, CliError> {
    match command {
        #[cfg(feature = "vm")]
        Command::Add { archive, inputs, codec, json, vm } => {
            let options = vxar::add::AddOptions { codec, policy: vm.policy() };
            let report = vxar::add::add_paths(&archive, &inputs, options)?;
            if json {
                print_json(&report);
            } else {
                for a in &report.added {
                    println!(
                        "added    {} ({}, {} -> {} bytes)",
                        a.name,
                        a.codec.unwrap_or("stored"),
                        a.input_size,
                        a.stored_size
                    );
                }
            }
            for (name, why) in &report.failed {
                eprintln!("FAILED   {name}: {why}");
            }
            Ok(if report.failed.is_empty() { 0 } else { vxar::EXIT_INTEGRITY })
        }
        Command::List { archive, show_pseudo, json } => {
            let archive = Archive::open(&archive)?;
            let rows = vxar::list::list(&archive, show_pseudo)?;
            if json {
                print_json(&rows);
            } else {
                print!("{}", vxar::list::render(&rows));
            }
            Ok(0)
        }
        Command::Extract {
            archive,
            names,
            output,
            decode_all,
            #[cfg(feature = "native")]
            native,
            reuse_vm,
            json,
            vm,
        } => {
            let archive = Archive::open(&archive)?;
            let policy = ExtractPolicy {
                decode_all,
                reuse_vm,
                #[cfg(feature = "native")]
                allow_native_fastpath: native,
                ..vm.policy()
            };
            let outcomes = vxar::extract::extract_archive(&archive, &names, &output, policy);
            Ok(report(&outcomes, json, "extracted"))
        }
        Command::Test { archive, json, vm } => {
            let archive = Archive::open(&archive)?;
            let outcomes = vxar::extract::test_archive(&archive, vm.policy());
            Ok(report(&outcomes, json, "OK"))
        }
        #[cfg(feature = "vm")]
        Command::Bench { archive, repetitions, json, vm } => {
            let archive = Archive::open(&archive)?;
            let report = vxar::bench::bench(&archive, repetitions, &vm.policy())?;
            if json {
                print_json(&report);
            } else {
                print!("{}", vxar::bench::render(&report));
            }
            Ok(0)
        }
        #[cfg(feature = "vm")]
        Command::Asm { source, output } => {
            let size = vxar::tools::asm(&source, &output)?;
            eprintln!("{}: {size} bytes", output.display());
            Ok(0)
        }
        #[cfg(feature = "vm")]
        Command::Run { image, vm } => {
            use std::io::{Read, Write};
            let bytes = std::fs::read(&image).map_err(|e| CliError::io(&image, e))?;
            let mut input = Vec::new();
            std::io::stdin().read_to_end(&mut input).map_err(|e| CliError::io("<stdin>", e))?;
            let result = vxar::tools::run_image(&bytes, input, &vm.policy())?;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&result.output).and_then(|_| stdout.flush()).map_err(|e| CliError::io("<stdout>", e))?;
            std::io::stderr().write_all(&result.diagnostics).ok();
            if let vxa_vm::Status::Trapped(t) = result.status {
                eprintln!("vxar: guest trapped: {t}");
            }
            Ok(vxar::tools::exit_status(result.status))
        }
    }
}
