//! Drives the command-line front end in-process, as a script would.

use hnls_core::cli::run_with;

fn main() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(["hnls-lab", "illpose", "--s", "0.25", "--p", "2", "--N", "16,32,64,128"], &mut out, &mut err);
    print!("{}", String::from_utf8_lossy(&out));
    println!("exit code {code}");

    out.clear();
    let code = run_with(["hnls-lab", "illpose", "--s", "0", "--p", "2", "--N", "16,32"], &mut out, &mut err);
    print!("{}", String::from_utf8_lossy(&err));
    println!("exit code {code}");
}
