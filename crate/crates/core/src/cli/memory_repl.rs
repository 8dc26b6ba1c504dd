use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use subfuse::memory::{FactEntry, FactRef, MemoryBank, MemoryError, Slot, SUMMARY_CAP};
use subfuse::pipeline::write_atomic;
use subfuse::ranked::DocId;
use subfuse::{Error, Result};

const HELP: &str = "\
commands:
  add_fact <video> <text...> [timestamp=<span>] [confidence=<p>] [tool=<name>]
  add_keyword <video> <keyword>
  search <keyword>
  remove_fact <video> <index> | remove_fact F#<n>
  clear_facts [<video>]
  select <ref>...            refs are F#<n> or <video>:<index>
  findings <text>...         replaces the findings slot, one finding per argument
  mark_processed <video> <tool>
  caption <video> <text...>
  facts                      list facts with their F#<n> numbers
  summary
  dump [<slot>]
  help | quit
";

#[derive(Debug, Args)]
pub struct MemoryArgs {
    /// Bank file; created on the first change if missing.
    #[arg(long)]
    bank: PathBuf,
    /// Character cap for `summary`.
    #[arg(long, default_value_t = SUMMARY_CAP)]
    cap: usize,
    /// Run this one command instead of reading commands from standard input.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    command: Vec<String>,
}

enum Outcome {
    Unchanged,
    Changed,
    Quit,
}

fn video(s: &str) -> Result<DocId> {
    s.parse()
}

fn usage(cmd: &str) -> Error {
    Error::domain(format!("wrong arguments for `{cmd}`; try `help`"))
}

fn parse_ref(bank: &MemoryBank, s: &str) -> Result<FactRef> {
    if s.starts_with("F#") {
        return Ok(bank.resolve_flat(s)?);
    }
    let (v, i) = s
        .rsplit_once(':')
        .ok_or_else(|| MemoryError::BadReference(s.to_owned()))?;
    let index = i.parse().map_err(|_| MemoryError::BadReference(s.to_owned()))?;
    Ok(FactRef::new(video(v)?, index))
}

fn execute(bank: &mut MemoryBank, words: &[String], cap: usize, out: &mut dyn Write) -> Result<Outcome> {
    let Some((cmd, args)) = words.split_first() else {
        return Ok(Outcome::Unchanged);
    };
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    match (cmd.as_str(), args.as_slice()) {
        ("add_fact", [v, rest @ ..]) => {
            let mut text = Vec::new();
            let (mut timestamp, mut confidence, mut tool) = (None, None, "manual".to_owned());
            for word in rest {
                match word.split_once('=') {
                    Some(("timestamp", t)) => timestamp = Some(t.to_owned()),
                    Some(("confidence", c)) => {
                        confidence = Some(c.parse::<f64>().map_err(|_| usage("add_fact"))?);
                    }
                    Some(("tool", t)) => tool = t.to_owned(),
                    _ => text.push(*word),
                }
            }
            let mut entry = FactEntry::new(text.join(" "), tool);
            entry.timestamp = timestamp;
            entry.confidence = confidence;
            let index = bank.add_fact(&video(v)?, entry)?;
            writeln!(out, "{v}[{index}]")?;
            Ok(Outcome::Changed)
        }
        ("add_keyword", [v, keyword]) => {
            bank.add_keyword(&video(v)?, keyword)?;
            Ok(Outcome::Changed)
        }
        ("search", [keyword]) => {
            let found = bank.search_by_keyword(keyword);
            for v in &found.videos {
                writeln!(out, "video {v}")?;
            }
            for m in &found.facts {
                writeln!(out, "fact {}[{}]: {}", m.video, m.index, m.entry.fact)?;
            }
            Ok(Outcome::Unchanged)
        }
        ("remove_fact", [r]) => {
            let r = bank.resolve_flat(r)?;
            bank.remove_fact(&r.video, r.index)?;
            Ok(Outcome::Changed)
        }
        ("remove_fact", [v, i]) => {
            let index = i.parse().map_err(|_| usage("remove_fact"))?;
            bank.remove_fact(&video(v)?, index)?;
            Ok(Outcome::Changed)
        }
        ("clear_facts", []) => {
            bank.clear_facts(None)?;
            Ok(Outcome::Changed)
        }
        ("clear_facts", [v]) => {
            bank.clear_facts(Some(&video(v)?))?;
            Ok(Outcome::Changed)
        }
        ("select", refs) => {
            let refs = refs.iter().map(|r| parse_ref(bank, r)).collect::<Result<Vec<_>>>()?;
            bank.select_facts(&refs)?;
            Ok(Outcome::Changed)
        }
        ("findings", texts) => {
            bank.replace_findings(texts.iter().map(|t| t.to_string()).collect());
            Ok(Outcome::Changed)
        }
        ("mark_processed", [v, tool]) => {
            bank.mark_processed(&video(v)?, *tool);
            Ok(Outcome::Changed)
        }
        ("caption", [v, text @ ..]) if !text.is_empty() => {
            bank.set_caption(&video(v)?, text.join(" "));
            Ok(Outcome::Changed)
        }
        ("facts", []) => {
            for (n, r, entry) in bank.flat_facts() {
                writeln!(out, "F#{n} {}[{}]: {}", r.video, r.index, entry.fact)?;
            }
            Ok(Outcome::Unchanged)
        }
        ("summary", []) => {
            write!(out, "{}", bank.summary_with_cap(cap))?;
            Ok(Outcome::Unchanged)
        }
        ("dump", []) => {
            writeln!(out, "{}", bank.dump(None))?;
            Ok(Outcome::Unchanged)
        }
        ("dump", [slot]) => {
            writeln!(out, "{}", bank.dump(Some(slot.parse::<Slot>()?)))?;
            Ok(Outcome::Unchanged)
        }
        ("help", _) => {
            write!(out, "{HELP}")?;
            Ok(Outcome::Unchanged)
        }
        ("quit" | "exit", []) => Ok(Outcome::Quit),
        (cmd, _) => Err(usage(cmd)),
    }
}

fn load(path: &Path) -> Result<MemoryBank> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(MemoryBank::load(&bytes)?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(MemoryBank::new()),
        Err(e) => Err(e.into()),
    }
}

fn save(path: &Path, bank: &MemoryBank) -> Result<()> {
    let mut text = bank.dump(None);
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn split(line: &str) -> Result<Vec<String>> {
    shlex::split(line).ok_or_else(|| Error::domain(format!("unbalanced quotes in {line:?}")))
}

pub fn run(args: MemoryArgs) -> Result<()> {
    let mut bank = load(&args.bank)?;
    let stdout = io::stdout();
    if !args.command.is_empty() {
        let mut out = stdout.lock();
        if let Outcome::Changed = execute(&mut bank, &args.command, args.cap, &mut out)? {
            save(&args.bank, &bank)?;
        }
        return Ok(());
    }

    let mut failed = None;
    for line in io::stdin().lock().lines() {
        let line = line?;
        let result = split(&line).and_then(|words| execute(&mut bank, &words, args.cap, &mut stdout.lock()));
        match result {
            Ok(Outcome::Changed) => save(&args.bank, &bank)?,
            Ok(Outcome::Unchanged) => {}
            Ok(Outcome::Quit) => break,
            Err(e) => {
                super::report_error(&e);
                failed = Some(e);
            }
        }
    }
    match failed {
        Some(e) => Err(Error::domain(format!("memory session had errors; last: {e}"))),
        None => Ok(()),
    }
}
