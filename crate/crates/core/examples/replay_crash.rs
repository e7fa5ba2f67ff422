//! Finds a crash, saves it, and replays the saved input.

use statefuzz::campaign::{replay, run_campaign, CampaignConfig};
use statefuzz::harness::{resolve_vars, toy_ftp, ToyFtp};
use statefuzz::message::{load_corpus, save_corpus};

fn main() {
    let cfg = CampaignConfig {
        state_vars: vec!["session_state".into()],
        stop_on_site: Some("retr_overflow".into()),
        ..CampaignConfig::default()
    };
    let r = run_campaign(&cfg, toy_ftp::reference_seeds(), None).unwrap();
    let Some(crash) = r.first_crash("retr_overflow") else {
        println!("no crash within {} execs", r.execs);
        return;
    };

    let dir = std::env::temp_dir().join("statefuzz-replay-example");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("retr_overflow.apfz");
    save_corpus(std::slice::from_ref(&crash.seed), &path).unwrap();

    let seed = load_corpus(&path).unwrap().remove(0);
    for m in &seed.messages {
        let shown = String::from_utf8_lossy(&m.bytes()[..m.len().min(40)])
            .escape_debug()
            .to_string();
        println!("> {shown}{}", if m.len() > 40 { "..." } else { "" });
    }
    let target = ToyFtp::new();
    let vars = resolve_vars(&target, &cfg.state_vars).unwrap();
    let out = replay(Box::new(target), &vars, &seed);
    println!(
        "replay verdict: {:?}, states {:?}",
        out.verdict, out.state_seq
    );
}
