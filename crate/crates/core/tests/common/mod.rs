//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::thread;

use chordweave::audio::AudioBuffer;
use chordweave::synth::{self, ClickTrack, CLICK_LEN};

pub const SR: u32 = 44100;

/// Accented 120 BPM clicks over a C major triad (0-4 s) and a G major
/// triad (4-8 s).
pub fn synthetic_song() -> AudioBuffer {
    let clicks = ClickTrack {
        bpm: 120.0,
        duration_s: 8.0,
        accent_every: Some(4),
        ..Default::default()
    }
    .render(SR);
    let mut chords = synth::harmonic_chord(&synth::triad_notes(0, false, 48.0), 3, 0.1, 4.0, SR);
    chords.extend(synth::harmonic_chord(
        &synth::triad_notes(7, false, 48.0),
        3,
        0.1,
        4.0,
        SR,
    ));
    AudioBuffer::mono(SR, synth::mix(&clicks, &chords)).unwrap()
}

/// Sample indices of clicks: the largest |x| within each run that starts
/// above `threshold`.
pub fn click_positions(x: &[f32], threshold: f32) -> Vec<usize> {
    let mut found = Vec::new();
    let mut i = 0;
    while i < x.len() {
        if x[i].abs() > threshold {
            let end = (i + 4 * CLICK_LEN).min(x.len());
            found.push((i..end).fold(i, |b, j| if x[j].abs() > x[b].abs() { j } else { b }));
            i = end;
        } else {
            i += 1;
        }
    }
    found
}

/// Answers `requests` HTTP requests with the same canned response and
/// returns the URL to post to.
pub fn stub_server(content_type: &'static str, body: Vec<u8>, requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    thread::spawn(move || {
        for _ in 0..requests {
            let Ok((mut conn, _)) = listener.accept() else {
                return;
            };
            read_request(&mut conn);
            let head = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            let _ = conn.write_all(head.as_bytes());
            let _ = conn.write_all(&body);
        }
    });
    url
}

fn read_request(conn: &mut impl Read) {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        let Ok(n) = conn.read(&mut chunk) else { return };
        if n == 0 {
            return;
        }
        buf.extend_from_slice(&chunk[..n]);
        let text = String::from_utf8_lossy(&buf);
        if let Some(head_end) = text.find("\r\n\r\n") {
            let len = text[..head_end]
                .lines()
                .find_map(|l| {
                    l.to_ascii_lowercase()
                        .strip_prefix("content-length:")
                        .and_then(|v| v.trim().parse::<usize>().ok())
                })
                .unwrap_or(0);
            if buf.len() >= head_end + 4 + len {
                return;
            }
        }
    }
}

/// A URL on which nothing is listening.
pub fn dead_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    drop(listener);
    url
}

pub fn chordweave(args: &[&str], dir: &Path) -> Output {
    chordweave_env(args, dir, &[])
}

pub fn chordweave_env(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chordweave"));
    cmd.args(args)
        .current_dir(dir)
        .env_remove("CHORDWEAVE_ENDPOINT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}
