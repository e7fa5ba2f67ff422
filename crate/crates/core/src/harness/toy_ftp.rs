//! A small FTP-like text server.
//!
//! Session states: INIT, AUTH_WAIT_PASS, LOGGED_IN and CLOSED. The planted
//! fault is an unchecked copy of a RETR argument into a 64-byte buffer, only
//! reachable after login.

use crate::feedback::StateValue;
use crate::message::Seed;

use super::{Fault, Probe, Response, Target, VarDecl};

pub const INIT: i64 = 0;
pub const AUTH_WAIT_PASS: i64 = 1;
pub const LOGGED_IN: i64 = 2;
pub const CLOSED: i64 = 3;

pub const SESSION_STATE_NAMES: &[(i64, &str)] = &[
    (INIT, "INIT"),
    (AUTH_WAIT_PASS, "AUTH_WAIT_PASS"),
    (LOGGED_IN, "LOGGED_IN"),
    (CLOSED, "CLOSED"),
];

/// The session-state transition table, `(from, to)`.
pub const TRANSITIONS: [(i64, i64); 8] = [
    (INIT, INIT),
    (INIT, AUTH_WAIT_PASS),
    (INIT, CLOSED),
    (AUTH_WAIT_PASS, AUTH_WAIT_PASS),
    (AUTH_WAIT_PASS, LOGGED_IN),
    (AUTH_WAIT_PASS, CLOSED),
    (LOGGED_IN, LOGGED_IN),
    (LOGGED_IN, CLOSED),
];

pub fn state_name(v: i64) -> Option<&'static str> {
    SESSION_STATE_NAMES
        .iter()
        .find(|(k, _)| *k == v)
        .map(|(_, n)| *n)
}

const RETR_BUF: usize = 64;
const FILES: &[(&str, usize)] = &[
    ("readme.txt", 120),
    ("notes.md", 48),
    ("pub/data.bin", 4096),
];

static VARS: [VarDecl; 21] = [
    VarDecl {
        name: "session_state",
        value_names: SESSION_STATE_NAMES,
    },
    VarDecl::plain("server_version"),
    VarDecl::plain("max_sessions"),
    VarDecl::plain("config_flags"),
    VarDecl::plain("idle_timeout"),
    VarDecl::plain("logged_in"),
    VarDecl::plain("anonymous_login"),
    VarDecl::plain("transfer_active"),
    VarDecl::plain("binary_mode"),
    VarDecl::plain("passive_mode"),
    VarDecl::plain("quit_requested"),
    VarDecl::plain("retr_served"),
    VarDecl::plain("rest_offset"),
    VarDecl::plain("data_port"),
    VarDecl::plain("abort_count"),
    VarDecl::plain("bytes_received"),
    VarDecl::plain("last_msg_len"),
    VarDecl::plain("last_byte"),
    VarDecl::plain("session_hash"),
    VarDecl::plain("line_checksum"),
    VarDecl::plain("log_level"),
];

mod block {
    pub const ENTRY: u16 = 0;
    pub const NO_EOL: u16 = 1;
    pub const EMPTY: u16 = 2;
    pub const UNKNOWN: u16 = 3;
    pub const NEED_LOGIN: u16 = 4;
    pub const USER: u16 = 10;
    pub const USER_EMPTY: u16 = 11;
    pub const USER_ANON: u16 = 12;
    pub const USER_AGAIN: u16 = 13;
    pub const PASS: u16 = 20;
    pub const PASS_OK: u16 = 21;
    pub const PASS_BAD: u16 = 22;
    pub const PASS_NO_USER: u16 = 23;
    pub const PASS_AGAIN: u16 = 24;
    pub const QUIT: u16 = 30;
    pub const LIST: u16 = 40;
    pub const LIST_ENTRY: u16 = 41;
    pub const LIST_FILTER: u16 = 42;
    pub const RETR: u16 = 50;
    pub const RETR_COPY: u16 = 51;
    pub const RETR_FOUND: u16 = 52;
    pub const RETR_MISSING: u16 = 53;
    pub const RETR_EMPTY: u16 = 54;
    pub const RETR_CHUNK: u16 = 55;
    pub const TYPE: u16 = 60;
    pub const PASV: u16 = 61;
    pub const PORT: u16 = 62;
    pub const REST: u16 = 63;
    pub const ABOR: u16 = 64;
    pub const NOOP: u16 = 65;
    pub const SYST: u16 = 66;
    pub const PWD: u16 = 67;
    pub const BAD_ARG: u16 = 68;
}

#[derive(Clone, Debug)]
pub struct ToyFtp {
    state: i64,
    user: Vec<u8>,
    anonymous: bool,
    transfer_active: bool,
    binary_mode: bool,
    passive_mode: bool,
    quit_requested: bool,
    retr_served: bool,
    rest_offset: i64,
    data_port: i64,
    abort_count: i64,
    bytes_received: i64,
    last_msg_len: i64,
    last_byte: i64,
    session_hash: u32,
    line_checksum: i64,
}

impl Default for ToyFtp {
    fn default() -> Self {
        Self::new()
    }
}

fn parse_num(arg: &[u8]) -> Option<i64> {
    std::str::from_utf8(arg).ok()?.trim().parse().ok()
}

impl ToyFtp {
    pub fn new() -> Self {
        ToyFtp {
            state: INIT,
            user: Vec::new(),
            anonymous: false,
            transfer_active: false,
            binary_mode: false,
            passive_mode: false,
            quit_requested: false,
            retr_served: false,
            rest_offset: 0,
            data_port: 0,
            abort_count: 0,
            bytes_received: 0,
            last_msg_len: 0,
            last_byte: 0,
            session_hash: 0x811C_9DC5,
            line_checksum: 0,
        }
    }

    pub fn session_state(&self) -> i64 {
        self.state
    }

    fn account_bytes(&mut self, msg: &[u8]) {
        self.bytes_received += msg.len() as i64;
        self.last_msg_len = msg.len() as i64;
        if let Some(&b) = msg.last() {
            self.last_byte = b as i64;
        }
        for &b in msg {
            self.session_hash = (self.session_hash ^ b as u32).wrapping_mul(0x0100_0193);
            self.line_checksum = (self.line_checksum + b as i64) & 0xFFFF;
        }
    }

    fn user(&mut self, arg: &[u8], p: &mut Probe<'_>) -> Result<Response, Fault> {
        p.hit(block::USER)?;
        match self.state {
            INIT | AUTH_WAIT_PASS => {
                if arg.is_empty() {
                    p.hit(block::USER_EMPTY)?;
                    return Ok(Response::reply("501 Syntax error\r\n"));
                }
                if self.state == AUTH_WAIT_PASS {
                    p.hit(block::USER_AGAIN)?;
                }
                self.anonymous = arg == b"anonymous";
                if self.anonymous {
                    p.hit(block::USER_ANON)?;
                }
                self.user = arg.to_vec();
                self.state = AUTH_WAIT_PASS;
                Ok(Response::reply("331 Password required\r\n"))
            }
            _ => Ok(Response::reply("503 Already logged in\r\n")),
        }
    }

    fn pass(&mut self, arg: &[u8], p: &mut Probe<'_>) -> Result<Response, Fault> {
        p.hit(block::PASS)?;
        match self.state {
            INIT => {
                p.hit(block::PASS_NO_USER)?;
                Ok(Response::reply("503 Login with USER first\r\n"))
            }
            AUTH_WAIT_PASS => {
                let ok = self.anonymous || (self.user == b"alice" && arg == b"secret");
                if ok {
                    p.hit(block::PASS_OK)?;
                    self.state = LOGGED_IN;
                    Ok(Response::reply("230 Logged in\r\n"))
                } else {
                    p.hit(block::PASS_BAD)?;
                    Ok(Response::reply("530 Login incorrect\r\n"))
                }
            }
            _ => {
                p.hit(block::PASS_AGAIN)?;
                Ok(Response::reply("503 Already logged in\r\n"))
            }
        }
    }

    fn list(&mut self, arg: &[u8], p: &mut Probe<'_>) -> Result<Response, Fault> {
        p.hit(block::LIST)?;
        let mut out = String::from("150 Listing\r\n");
        for (name, size) in FILES {
            if !arg.is_empty() {
                p.hit(block::LIST_FILTER)?;
                if !name.as_bytes().starts_with(arg) {
                    continue;
                }
            }
            p.hit(block::LIST_ENTRY)?;
            out.push_str(&format!("{size:>8} {name}\r\n"));
        }
        self.transfer_active = true;
        out.push_str("226 Done\r\n");
        Ok(Response::reply(&out))
    }

    fn retr(&mut self, arg: &[u8], p: &mut Probe<'_>) -> Result<Response, Fault> {
        p.hit(block::RETR)?;
        if arg.is_empty() {
            p.hit(block::RETR_EMPTY)?;
            return Ok(Response::reply("501 Missing file name\r\n"));
        }
        let mut path = [0u8; RETR_BUF];
        for (i, &b) in arg.iter().enumerate() {
            p.hit(block::RETR_COPY)?;
            if i >= RETR_BUF {
                return Err(Fault::Crash("retr_overflow"));
            }
            path[i] = b;
        }
        let path = &path[..arg.len()];
        match FILES.iter().find(|(n, _)| n.as_bytes() == path) {
            Some(&(_, size)) => {
                p.hit(block::RETR_FOUND)?;
                let start = (self.rest_offset.max(0) as usize).min(size);
                for _ in (start..size).step_by(512) {
                    p.hit(block::RETR_CHUNK)?;
                }
                self.rest_offset = 0;
                self.transfer_active = true;
                self.retr_served = true;
                Ok(Response::reply("226 Transfer complete\r\n"))
            }
            None => {
                p.hit(block::RETR_MISSING)?;
                Ok(Response::reply("550 No such file\r\n"))
            }
        }
    }

    fn logged_in_cmd(
        &mut self,
        cmd: &[u8],
        arg: &[u8],
        p: &mut Probe<'_>,
    ) -> Result<Response, Fault> {
        match cmd {
            b"LIST" => self.list(arg, p),
            b"RETR" => self.retr(arg, p),
            b"TYPE" => {
                p.hit(block::TYPE)?;
                match arg {
                    b"I" => self.binary_mode = true,
                    b"A" => self.binary_mode = false,
                    _ => {
                        p.hit(block::BAD_ARG)?;
                        return Ok(Response::reply("504 Unsupported type\r\n"));
                    }
                }
                Ok(Response::reply("200 Type set\r\n"))
            }
            b"PASV" => {
                p.hit(block::PASV)?;
                self.passive_mode = true;
                Ok(Response::reply("227 Entering passive mode\r\n"))
            }
            b"PORT" => {
                p.hit(block::PORT)?;
                match parse_num(arg) {
                    Some(port) if (1..=65535).contains(&port) => {
                        self.data_port = port;
                        self.passive_mode = false;
                        Ok(Response::reply("200 Port set\r\n"))
                    }
                    _ => {
                        p.hit(block::BAD_ARG)?;
                        Ok(Response::reply("501 Bad port\r\n"))
                    }
                }
            }
            b"REST" => {
                p.hit(block::REST)?;
                match parse_num(arg) {
                    Some(off) if off >= 0 => {
                        self.rest_offset = off;
                        Ok(Response::reply("350 Restarting\r\n"))
                    }
                    _ => {
                        p.hit(block::BAD_ARG)?;
                        Ok(Response::reply("501 Bad offset\r\n"))
                    }
                }
            }
            b"ABOR" => {
                p.hit(block::ABOR)?;
                self.abort_count += 1;
                self.transfer_active = false;
                Ok(Response::reply("226 Aborted\r\n"))
            }
            b"PWD" => {
                p.hit(block::PWD)?;
                Ok(Response::reply("257 \"/\"\r\n"))
            }
            _ => {
                p.hit(block::UNKNOWN)?;
                Ok(Response::reply("500 Unknown command\r\n"))
            }
        }
    }
}

impl Target for ToyFtp {
    fn name(&self) -> &str {
        "toy-ftp"
    }

    fn variables(&self) -> &[VarDecl] {
        &VARS
    }

    fn reset(&mut self) {
        *self = ToyFtp::new();
    }

    fn handle(&mut self, msg: &[u8], p: &mut Probe<'_>) -> Result<Response, Fault> {
        p.hit(block::ENTRY)?;
        self.account_bytes(msg);
        if self.state == CLOSED {
            return Ok(Response::closing(""));
        }
        let end = msg
            .iter()
            .position(|&b| b == b'\r' || b == b'\n')
            .unwrap_or(msg.len());
        if end == msg.len() {
            p.hit(block::NO_EOL)?;
        }
        let line = &msg[..end];
        if line.is_empty() {
            p.hit(block::EMPTY)?;
            return Ok(Response::reply("500 Empty command\r\n"));
        }
        let (cmd, arg) = match line.iter().position(|&b| b == b' ') {
            Some(sp) => (&line[..sp], &line[sp + 1..]),
            None => (line, &line[line.len()..]),
        };
        let cmd = cmd.to_ascii_uppercase();
        self.transfer_active = false;
        match cmd.as_slice() {
            b"USER" => self.user(arg, p),
            b"PASS" => self.pass(arg, p),
            b"QUIT" => {
                p.hit(block::QUIT)?;
                self.quit_requested = true;
                self.state = CLOSED;
                Ok(Response::closing("221 Goodbye\r\n"))
            }
            b"NOOP" => {
                p.hit(block::NOOP)?;
                Ok(Response::reply("200 OK\r\n"))
            }
            b"SYST" => {
                p.hit(block::SYST)?;
                Ok(Response::reply("215 UNIX Type: L8\r\n"))
            }
            _ if self.state == LOGGED_IN => self.logged_in_cmd(&cmd, arg, p),
            b"LIST" | b"RETR" | b"TYPE" | b"PASV" | b"PORT" | b"REST" | b"ABOR" | b"PWD" => {
                p.hit(block::NEED_LOGIN)?;
                Ok(Response::reply("530 Please login\r\n"))
            }
            _ => {
                p.hit(block::UNKNOWN)?;
                Ok(Response::reply("500 Unknown command\r\n"))
            }
        }
    }

    fn read_vars(&self) -> Vec<StateValue> {
        vec![
            Some(self.state),
            Some(3),
            Some(64),
            Some(0x11),
            Some(300),
            Some((self.state == LOGGED_IN) as i64),
            Some(self.anonymous as i64),
            Some(self.transfer_active as i64),
            Some(self.binary_mode as i64),
            Some(self.passive_mode as i64),
            Some(self.quit_requested as i64),
            Some(self.retr_served as i64),
            Some(self.rest_offset),
            Some(self.data_port),
            Some(self.abort_count),
            Some(self.bytes_received),
            Some(self.last_msg_len),
            Some(self.last_byte),
            Some(self.session_hash as i64),
            Some(self.line_checksum),
            Some(2),
        ]
    }
}

/// Reference sessions: an anonymous download, a named login, and an early quit.
pub fn reference_seeds() -> Vec<Seed> {
    vec![
        Seed::from_strs(&[
            "USER anonymous\r\n",
            "PASS guest\r\n",
            "LIST\r\n",
            "RETR readme.txt\r\n",
            "QUIT\r\n",
        ]),
        Seed::from_strs(&["USER alice\r\n", "PASS secret\r\n", "PWD\r\n", "QUIT\r\n"]),
        Seed::from_strs(&["USER anonymous\r\n", "QUIT\r\n"]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{CoverageMap, StateId, Verdict};
    use crate::harness::{run_sequence, DEFAULT_STEP_BUDGET};
    use crate::message::Message;
    use std::collections::{BTreeSet, VecDeque};

    fn run(msgs: &[&str]) -> crate::feedback::ExecOutcome {
        let mut t = ToyFtp::new();
        let m: Vec<Message> = msgs.iter().map(|s| Message::from(*s)).collect();
        run_sequence(&mut t, &[0], &m, DEFAULT_STEP_BUDGET)
    }

    fn states(v: &[i64]) -> Vec<StateId> {
        v.iter().map(|&s| StateId::single(s)).collect()
    }

    #[test]
    fn anonymous_login_trace() {
        let out = run(&["USER anonymous\r\n", "PASS x\r\n"]);
        assert_eq!(out.state_seq, states(&[AUTH_WAIT_PASS, LOGGED_IN]));
        assert!(out.verdict.is_ok());
    }

    #[test]
    fn quit_from_initial() {
        let out = run(&["QUIT\r\n"]);
        assert_eq!(out.state_seq, states(&[CLOSED]));
        assert!(out.verdict.is_ok());
    }

    #[test]
    fn quit_ends_delivery() {
        let out = run(&["QUIT\r\n", "USER anonymous\r\n"]);
        assert_eq!(out.state_seq.len(), 1);
    }

    #[test]
    fn planted_crash() {
        let long = format!("RETR {}\r\n", "a".repeat(65));
        let out = run(&["USER anonymous\r\n", "PASS x\r\n", &long]);
        assert_eq!(out.verdict, Verdict::Crash("retr_overflow".into()));
        let edge = format!("RETR {}\r\n", "a".repeat(64));
        let out = run(&["USER anonymous\r\n", "PASS x\r\n", &edge]);
        assert!(out.verdict.is_ok());
        // same argument before login is harmless
        let out = run(&["USER anonymous\r\n", &long]);
        assert!(out.verdict.is_ok());
    }

    #[test]
    fn alice_needs_her_password() {
        let out = run(&["USER alice\r\n", "PASS nope\r\n", "PASS secret\r\n"]);
        assert_eq!(
            out.state_seq,
            states(&[AUTH_WAIT_PASS, AUTH_WAIT_PASS, LOGGED_IN])
        );
    }

    #[test]
    fn replay_is_deterministic() {
        let seq = [
            "USER anonymous\r\n",
            "PASS a\r\n",
            "LIST\r\n",
            "RETR readme.txt\r\n",
            "QUIT\r\n",
        ];
        let a = run(&seq);
        let b = run(&seq);
        assert_eq!(a.coverage.as_slice(), b.coverage.as_slice());
        assert_eq!(a.state_seq, b.state_seq);
        let mut t = ToyFtp::new();
        let mut map = CoverageMap::new();
        let mut p = Probe::new(&mut map, DEFAULT_STEP_BUDGET);
        t.handle(b"USER x\r\n", &mut p).unwrap();
        t.reset();
        assert_eq!(t.read_vars(), ToyFtp::new().read_vars());
    }

    /// Command alphabet that covers every branch of the session-state table.
    const ALPHABET: &[&[u8]] = &[
        b"USER anonymous\r\n",
        b"USER alice\r\n",
        b"USER \r\n",
        b"PASS x\r\n",
        b"PASS secret\r\n",
        b"LIST\r\n",
        b"RETR readme.txt\r\n",
        b"NOOP\r\n",
        b"XYZ\r\n",
        b"\r\n",
        b"QUIT\r\n",
    ];

    fn step(t: &mut ToyFtp, msg: &[u8]) -> Result<Response, Fault> {
        let mut map = CoverageMap::new();
        let mut p = Probe::new(&mut map, DEFAULT_STEP_BUDGET);
        t.handle(msg, &mut p)
    }

    #[test]
    fn reachable_fsm_has_four_states_and_eight_edges() {
        let mut seen = BTreeSet::from([INIT]);
        let mut edges = BTreeSet::new();
        let mut queue = VecDeque::from([ToyFtp::new()]);
        let mut visited_configs = BTreeSet::new();
        while let Some(t) = queue.pop_front() {
            let key = (t.state, t.user.clone(), t.anonymous);
            if !visited_configs.insert(key) {
                continue;
            }
            for m in ALPHABET {
                let mut next = t.clone();
                let resp = step(&mut next, m).unwrap();
                edges.insert((t.state, next.state));
                seen.insert(next.state);
                if !resp.close {
                    queue.push_back(next);
                }
            }
        }
        assert_eq!(seen.len(), 4);
        assert_eq!(edges, TRANSITIONS.into_iter().collect());
    }

    #[test]
    fn short_messages_never_crash() {
        let mut logged_in = ToyFtp::new();
        step(&mut logged_in, b"USER anonymous\r\n").unwrap();
        let waiting = logged_in.clone();
        step(&mut logged_in, b"PASS x\r\n").unwrap();
        let starts = [ToyFtp::new(), waiting, logged_in];
        let mut map = CoverageMap::new();
        let mut p = Probe::new(&mut map, u64::MAX);
        let mut msg = Vec::with_capacity(3);
        for start in &starts {
            for len in 1..=3u32 {
                for n in 0..(1u32 << (8 * len)) {
                    msg.clear();
                    msg.extend((0..len).map(|i| (n >> (8 * i)) as u8));
                    let mut t = start.clone();
                    assert!(t.handle(&msg, &mut p).is_ok(), "{msg:?}");
                }
            }
        }
    }
}
