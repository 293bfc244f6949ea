//! `keyrate`: key-rate bounds, compress-then-pad encryption, and exact
//! perfect-secrecy verification for individual sequences.
//!
//! All structured output is JSON on stdout (or `--out`). Exit codes:
//! 1 usage, 2 validation, 3 budget, 4 integrity.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use keyrate_core::bounds::{full_report, ReportConfig};
use keyrate_core::crypto::{
    decrypt, encrypt, gen_key, Cryptogram, Key, SchemeSpec,
};
use keyrate_core::error::Error as CoreError;
use keyrate_core::fsm::{build_shift_register_fsm, dk_capacity, FsmFile, FsmSpec};
use keyrate_core::lz::{lz78_length, lz78_parse};
use keyrate_core::seq::{Alphabet, SymbolSequence};
use keyrate_core::verifier::{guessing_attack, ScenarioFile};

const DEFAULT_SEED: u64 = 0x6b65_7972;

#[derive(Parser)]
#[command(name = "keyrate", version, about = "Key-rate analysis for individual sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every key-rate bound and scheme rate on an input
    Bounds(BoundsArgs),
    /// Encrypt a plaintext file with one of the pad schemes
    Encrypt(EncryptArgs),
    /// Decrypt a cryptogram file
    Decrypt(DecryptArgs),
    /// Incremental parse: phrase list, phrase count, compressed bits
    Parse(ParseArgs),
    /// Run a scenario file and print the secrecy verdict
    Verify(VerifyArgs),
    /// Capacity of a (d, k) run-length constraint
    Capacity(CapacityArgs),
    /// Validate a machine spec file
    FsmValidate(FsmValidateArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Plaintext file
    #[arg(long = "in")]
    input: PathBuf,
    /// Alphabet: a glyph charset like "01", or "bytes"
    #[arg(long)]
    alphabet: String,
    /// Keep newline bytes instead of stripping them
    #[arg(long)]
    keep_newlines: bool,
}

#[derive(Args)]
struct SiArgs {
    /// Side-information file (aligned with the plaintext)
    #[arg(long)]
    si: Option<PathBuf>,
    /// Side-information alphabet
    #[arg(long)]
    si_alphabet: Option<String>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    si: SiArgs,
    /// Adversary state count for the machine-independent bounds
    #[arg(long, default_value_t = 2)]
    states: usize,
    /// Largest shift-register order to sweep
    #[arg(long, default_value_t = 4)]
    max_order: usize,
    /// Period of the time-varying machine class
    #[arg(long, default_value_t = 1)]
    period: usize,
    /// Extra counter machine to evaluate (spec file)
    #[arg(long)]
    fsm: Option<PathBuf>,
    /// Seed recorded in the report
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SchemeArgs {
    /// raw-otp | lz78-otp | type-otp | markov-type-otp | block-type-otp | condlz-otp
    #[arg(long)]
    scheme: String,
    /// Machine spec file for type-otp / block-type-otp
    #[arg(long)]
    fsm: Option<PathBuf>,
    /// Shift-register order for markov-type-otp
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Block length for block-type-otp
    #[arg(long, default_value_t = 2)]
    block_len: usize,
}

#[derive(Args)]
struct EncryptArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    si: SiArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Key file from a previous run (otherwise one is drawn from --seed)
    #[arg(long)]
    key_file: Option<PathBuf>,
    /// Where to write the generated key
    #[arg(long)]
    key_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecryptArgs {
    /// Cryptogram file
    #[arg(long = "in")]
    input: PathBuf,
    /// Alphabet of the plaintext
    #[arg(long)]
    alphabet: String,
    #[command(flatten)]
    si: SiArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long)]
    key_file: PathBuf,
    /// Where to write the recovered plaintext
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    keep_newlines: bool,
}

#[derive(Args)]
struct ParseArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario file
    #[arg(long)]
    scenario: PathBuf,
    /// Enumeration shards
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also replay the key-guessing loop
    #[arg(long)]
    attack: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FsmValidateArgs {
    #[arg(long)]
    fsm: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Validation(String),
    Budget(String),
    Integrity(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Integrity(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Budget(_) => "budget",
            CliError::Integrity(_) => "integrity",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Budget(m) | CliError::Integrity(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::EnumerationBudgetExceeded { .. }
            | CoreError::KeySpaceBudgetExceeded { .. }
            | CoreError::CountBudgetExceeded { .. }
            | CoreError::StateBudgetExceeded { .. } => CliError::Budget(e.to_string()),
            CoreError::MalformedBitstream(_)
            | CoreError::MalformedHeader(_)
            | CoreError::RankOutOfRange { .. }
            | CoreError::KeyOutOfRange(_)
            | CoreError::NotInTypeClass => CliError::Integrity(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({ "error": { "kind": e.kind(), "message": e.message() } });
            eprintln!("{record}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Bounds(args) => cmd_bounds(args),
        Command::Encrypt(args) => cmd_encrypt(args),
        Command::Decrypt(args) => cmd_decrypt(args),
        Command::Parse(args) => cmd_parse(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Capacity(args) => cmd_capacity(args),
        Command::FsmValidate(args) => cmd_fsm_validate(args),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            // tolerate a closed pipe (e.g. piping into head)
            let _ = writeln!(stdout, "{text}");
            Ok(())
        }
    }
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn parse_alphabet(spec: &str) -> CliResult<Option<Alphabet>> {
    if spec == "bytes" {
        return Ok(None); // byte mode
    }
    Alphabet::from_charset(spec).map(Some).map_err(CliError::from)
}

fn load_sequence(
    path: &Path,
    alphabet_spec: &str,
    keep_newlines: bool,
) -> CliResult<(SymbolSequence, Option<Alphabet>)> {
    let mut raw = read_file(path)?;
    if !keep_newlines {
        raw.retain(|&b| b != b'\n' && b != b'\r');
    }
    match parse_alphabet(alphabet_spec)? {
        None => Ok((SymbolSequence::from_bytes(&raw), None)),
        Some(alphabet) => {
            let text = String::from_utf8(raw).map_err(|e| {
                CliError::Validation(format!("{} is not valid UTF-8: {e}", path.display()))
            })?;
            let x = SymbolSequence::from_glyph_chars(&text, &alphabet)?;
            Ok((x, Some(alphabet)))
        }
    }
}

fn load_si(si: &SiArgs, keep_newlines: bool) -> CliResult<Option<SymbolSequence>> {
    match (&si.si, &si.si_alphabet) {
        (None, None) => Ok(None),
        (Some(path), Some(spec)) => {
            let (y, _) = load_sequence(path, spec, keep_newlines)?;
            Ok(Some(y))
        }
        _ => Err(CliError::Usage("--si and --si-alphabet must be given together".into())),
    }
}

fn load_fsm(path: &Path) -> CliResult<FsmSpec> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|e| CliError::Validation(format!("{} is not valid UTF-8: {e}", path.display())))?;
    let file: FsmFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("machine spec: {e}")))?;
    let (fsm, _, _) = file.parse()?;
    Ok(fsm)
}

fn build_scheme(args: &SchemeArgs, alpha: usize, si_alpha: usize) -> CliResult<SchemeSpec> {
    Ok(match args.scheme.as_str() {
        "raw-otp" => SchemeSpec::RawOtp { alpha, key_set: None },
        "lz78-otp" => SchemeSpec::Lz78Otp { alpha },
        "type-otp" => {
            let fsm = match &args.fsm {
                Some(path) => load_fsm(path)?,
                None => build_shift_register_fsm(0, alpha)?,
            };
            SchemeSpec::TypeOtp { fsm }
        }
        "markov-type-otp" => SchemeSpec::MarkovTypeOtp { order: args.order, alpha },
        "block-type-otp" => {
            let fsm = match &args.fsm {
                Some(path) => load_fsm(path)?,
                None => build_shift_register_fsm(0, alpha)?,
            };
            SchemeSpec::BlockTypeOtp { fsm, block_len: args.block_len }
        }
        "condlz-otp" => SchemeSpec::CondLzOtp { alpha, si_alpha },
        other => return Err(CliError::Usage(format!("unknown scheme {other:?}"))),
    })
}

fn cmd_bounds(args: BoundsArgs) -> CliResult<()> {
    let (x, _) = load_sequence(&args.input.input, &args.input.alphabet, args.input.keep_newlines)?;
    let y = load_si(&args.si, args.input.keep_newlines)?;
    let custom_machine = args.fsm.as_deref().map(load_fsm).transpose()?;
    let config = ReportConfig {
        states: args.states,
        max_order: args.max_order,
        period: args.period,
        seed: args.seed,
        custom_machine,
    };
    let report = full_report(&x, y.as_ref(), &config)?;
    emit(&args.out, &report.to_json())
}

const KEY_MAGIC: &str = "keyrate-key-v1";

fn key_to_json(scheme: &SchemeSpec, key: &Key, seed: Option<u64>) -> String {
    serde_json::to_string_pretty(&json!({
        "magic": KEY_MAGIC,
        "scheme": scheme.id(),
        "seed": seed,
        "key": key,
    }))
    .expect("key serializes")
}

fn key_from_json(text: &str) -> CliResult<Key> {
    let v: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::Integrity(format!("key file: {e}")))?;
    if v.get("magic").and_then(|m| m.as_str()) != Some(KEY_MAGIC) {
        return Err(CliError::Integrity("key file: bad magic tag".into()));
    }
    let key = v
        .get("key")
        .cloned()
        .ok_or_else(|| CliError::Integrity("key file: missing key field".into()))?;
    serde_json::from_value(key).map_err(|e| CliError::Integrity(format!("key file: {e}")))
}

fn cmd_encrypt(args: EncryptArgs) -> CliResult<()> {
    let (x, _) = load_sequence(&args.input.input, &args.input.alphabet, args.input.keep_newlines)?;
    let y = load_si(&args.si, args.input.keep_newlines)?;
    let scheme = build_scheme(&args.scheme, x.alpha(), y.as_ref().map_or(0, |y| y.alpha()))?;
    let (key, seed_used) = match &args.key_file {
        Some(path) => {
            let text = String::from_utf8(read_file(path)?)
                .map_err(|e| CliError::Integrity(format!("key file: {e}")))?;
            (key_from_json(&text)?, None)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            (gen_key(&scheme, &x, y.as_ref(), &mut rng)?, Some(args.seed))
        }
    };
    if args.key_file.is_none() && args.key_out.is_none() {
        return Err(CliError::Usage(
            "a generated key must be saved: pass --key-out (or supply --key-file)".into(),
        ));
    }
    let w = encrypt(&scheme, &x, y.as_ref(), &key)?;
    if let Some(path) = &args.key_out {
        std::fs::write(path, key_to_json(&scheme, &key, seed_used))
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    }
    emit(&args.out, &w.to_json())
}

fn cmd_decrypt(args: DecryptArgs) -> CliResult<()> {
    let text = String::from_utf8(read_file(&args.input)?)
        .map_err(|e| CliError::Integrity(format!("cryptogram file: {e}")))?;
    let w = Cryptogram::from_json(&text)?;
    let alphabet = parse_alphabet(&args.alphabet)?;
    let alpha = alphabet.as_ref().map_or(256, |a| a.size());
    let y = load_si(&args.si, args.keep_newlines)?;
    let mut scheme_args = args.scheme;
    if scheme_args.scheme.is_empty() {
        scheme_args.scheme = w.scheme_id.clone();
    }
    let scheme = build_scheme(&scheme_args, alpha, y.as_ref().map_or(0, |y| y.alpha()))?;
    let key_text = String::from_utf8(read_file(&args.key_file)?)
        .map_err(|e| CliError::Integrity(format!("key file: {e}")))?;
    let key = key_from_json(&key_text)?;
    let x = decrypt(&scheme, &w, y.as_ref(), &key)?;
    let rendered = match &alphabet {
        Some(a) => x.render(a)?.into_bytes(),
        None => x.symbols().iter().map(|&s| s as u8).collect(),
    };
    match &args.out {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{}", String::from_utf8_lossy(&rendered));
            Ok(())
        }
    }
}

fn cmd_parse(args: ParseArgs) -> CliResult<()> {
    let (x, alphabet) =
        load_sequence(&args.input.input, &args.input.alphabet, args.input.keep_newlines)?;
    let pr = lz78_parse(&x);
    let lz_bits = if x.alpha() >= 2 { lz78_length(&x)? } else { 0 };
    let phrases: Vec<serde_json::Value> = pr
        .phrases
        .iter()
        .enumerate()
        .map(|(i, &(start, len))| {
            let slice = SymbolSequence::new(
                x.alpha(),
                x.symbols()[start..start + len].to_vec(),
            )
            .expect("phrase symbols are valid");
            let text = match &alphabet {
                Some(a) => slice.render(a).expect("alphabet matches"),
                None => slice.to_string(),
            };
            json!({
                "index": i,
                "start": start,
                "len": len,
                "text": text,
                "complete": i < pr.c,
            })
        })
        .collect();
    let doc = json!({
        "n": x.len(),
        "alpha": x.alpha(),
        "c": pr.c,
        "last_incomplete": pr.last_incomplete,
        "lz_bits": lz_bits,
        "phrases": phrases,
    });
    emit(&args.out, &serde_json::to_string_pretty(&doc).expect("parse doc serializes"))
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let text = String::from_utf8(read_file(&args.scenario)?)
        .map_err(|e| CliError::Validation(format!("scenario file: {e}")))?;
    let file = ScenarioFile::from_json(&text)?;
    let scenario = file.resolve()?;
    let verdict = scenario.run(args.jobs.max(1))?;
    let witness_text = verdict
        .witness
        .as_ref()
        .map(|w| w.render(&scenario.alphabet))
        .transpose()?;
    let mut doc = json!({
        "verdict": verdict,
        "witness_text": witness_text,
    });
    if args.attack {
        let w = encrypt(&scenario.scheme, &scenario.x, scenario.y.as_ref(), &scenario.key)?;
        let guesses = guessing_attack(
            &scenario.scheme,
            &w,
            &scenario.discriminator,
            scenario.y.as_ref(),
            &scenario.budgets,
        )?;
        let rendered: Vec<serde_json::Value> = guesses
            .iter()
            .map(|g| {
                json!({
                    "plaintext": g.plaintext.render(&scenario.alphabet).unwrap_or_default(),
                    "key_hits": g.key_hits,
                    "first_key_index": g.first_key_index,
                })
            })
            .collect();
        doc["attack"] = json!({ "accepted_candidates": rendered });
    }
    emit(&args.out, &serde_json::to_string_pretty(&doc).expect("verdict serializes"))
}

fn cmd_capacity(args: CapacityArgs) -> CliResult<()> {
    let capacity = dk_capacity(args.d, args.k)?;
    let doc = json!({
        "d": args.d,
        "k": args.k,
        "capacity_bits_per_symbol": capacity,
    });
    emit(&args.out, &serde_json::to_string_pretty(&doc).expect("capacity doc serializes"))
}

fn cmd_fsm_validate(args: FsmValidateArgs) -> CliResult<()> {
    let text = String::from_utf8(read_file(&args.fsm)?)
        .map_err(|e| CliError::Validation(format!("machine spec: {e}")))?;
    let file: FsmFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("machine spec: {e}")))?;
    let (fsm, alphabet, si_alphabet) = file.parse()?;
    let doc = json!({
        "ok": true,
        "states": fsm.state_count(),
        "initial": fsm.initial_state(),
        "period": fsm.period(),
        "alpha": alphabet.size(),
        "si_alpha": si_alphabet.map(|a| a.size()),
        "output_table": fsm.has_output(),
    });
    emit(&args.out, &serde_json::to_string_pretty(&doc).expect("validation doc serializes"))
}
