// Minimal online-banking card: the registration form (signing up is done on
// the web, not on the handset), login with the SMS'd temporary password, a
// forced password change, balance display and a transfer form.

import { ApiError, Cast, GatewayClient } from "./api";
import { majorToMinor } from "./money";

export class WebBankPane {
  token: string | null = null;
  msisdn: string | null = null;

  private statusEl!: HTMLDivElement;
  private bannerEl!: HTMLDivElement;
  private regMsisdn!: HTMLInputElement;
  private regName!: HTMLInputElement;
  private regPin!: HTMLInputElement;
  private regQuestion!: HTMLInputElement;
  private regAnswer!: HTMLInputElement;
  private regBank!: HTMLInputElement;
  private loginMsisdn!: HTMLInputElement;
  private loginPassword!: HTMLInputElement;
  private newPassword!: HTMLInputElement;
  private balanceEl!: HTMLDivElement;
  private transferTo!: HTMLInputElement;
  private transferAmount!: HTMLInputElement;
  private transferSource!: HTMLSelectElement;
  private transferResult!: HTMLDivElement;

  constructor(
    private root: HTMLElement,
    private client: GatewayClient,
    _cast: Cast,
  ) {
    this.render();
  }

  private render(): void {
    this.root.classList.add("webbank");
    this.root.innerHTML = "";
    const title = document.createElement("h3");
    title.textContent = "Online platform";
    this.bannerEl = div("banner hidden");
    this.statusEl = div("status");
    this.statusEl.textContent = "not signed in";

    const regBox = div("box");
    regBox.append(heading("Register"));
    this.regMsisdn = input("cellphone number");
    this.regName = input("full name");
    this.regPin = input("choose a 4-6 digit pin");
    this.regQuestion = input("secret question");
    this.regAnswer = input("secret answer");
    this.regBank = input("bank account (optional)");
    const regButton = button("Register", () => void this.register());
    regBox.append(
      this.regMsisdn,
      this.regName,
      this.regPin,
      this.regQuestion,
      this.regAnswer,
      this.regBank,
      regButton,
    );

    const loginBox = div("box");
    loginBox.append(heading("Login"));
    this.loginMsisdn = input("login id (cellphone number)");
    this.loginPassword = input("password");
    this.loginPassword.type = "password";
    const loginButton = button("Login", () => void this.login());
    this.newPassword = input("new password (when forced to change)");
    this.newPassword.type = "password";
    const changeButton = button("Change password", () => void this.changePassword());
    loginBox.append(this.loginMsisdn, this.loginPassword, loginButton, this.newPassword, changeButton);

    const bankBox = div("box");
    bankBox.append(heading("Wallet"));
    this.balanceEl = div("balance");
    const balanceButton = button("Check balance", () => void this.checkBalance());
    this.transferTo = input("recipient cellphone number");
    this.transferAmount = input("amount");
    this.transferSource = document.createElement("select");
    for (const source of ["AUTO", "WALLET", "BANK"]) {
      const option = document.createElement("option");
      option.value = source;
      option.textContent = `source: ${source}`;
      this.transferSource.appendChild(option);
    }
    const transferButton = button("Send money", () => void this.transfer());
    this.transferResult = div("result");
    bankBox.append(
      balanceButton,
      this.balanceEl,
      this.transferTo,
      this.transferAmount,
      this.transferSource,
      transferButton,
      this.transferResult,
    );

    this.root.append(title, this.bannerEl, this.statusEl, regBox, loginBox, bankBox);
  }

  async register(): Promise<void> {
    await this.guard(async () => {
      const result = await this.client.register({
        msisdn: this.regMsisdn.value.trim(),
        full_name: this.regName.value.trim(),
        pin: this.regPin.value.trim(),
        secret_question: this.regQuestion.value.trim(),
        secret_answer: this.regAnswer.value.trim(),
        bank_account: this.regBank.value.trim() || null,
      });
      this.statusEl.textContent = `registered ${result.login_id}; credentials sent by SMS`;
    });
  }

  async login(): Promise<void> {
    await this.guard(async () => {
      const view = await this.client.login(this.loginMsisdn.value.trim(), this.loginPassword.value);
      this.token = view.token;
      this.msisdn = view.msisdn;
      this.statusEl.textContent = view.must_change_password
        ? `signed in as ${view.msisdn}; temporary password must be changed`
        : `signed in as ${view.msisdn}`;
    });
  }

  async changePassword(): Promise<void> {
    await this.guard(async () => {
      if (!this.token) throw new ApiError("INVALID_LOGIN", "Sign in first", 401);
      await this.client.changePassword(this.token, this.newPassword.value);
      this.statusEl.textContent = `signed in as ${this.msisdn}`;
      this.newPassword.value = "";
    });
  }

  async checkBalance(): Promise<void> {
    await this.guard(async () => {
      if (!this.token || !this.msisdn) throw new ApiError("INVALID_LOGIN", "Sign in first", 401);
      const view = await this.client.balance(this.token, this.msisdn);
      // the gateway renders the figure; the UI only repeats it
      this.balanceEl.textContent = `Balance: ${view.rendered}`;
    });
  }

  async transfer(): Promise<void> {
    await this.guard(async () => {
      if (!this.token) throw new ApiError("INVALID_LOGIN", "Sign in first", 401);
      const txn = await this.client.transferWallet(
        this.token,
        this.transferTo.value.trim(),
        majorToMinor(this.transferAmount.value),
        this.transferSource.value as "AUTO" | "WALLET" | "BANK",
      );
      this.transferResult.textContent = `${txn.state}: ${txn.txn_id} (${txn.source})`;
    });
  }

  private async guard(action: () => Promise<void>): Promise<void> {
    this.bannerEl.classList.add("hidden");
    try {
      await action();
    } catch (error) {
      const text =
        error instanceof ApiError
          ? `${error.code}: ${error.message}`
          : `error: ${String(error)}`;
      this.bannerEl.textContent = text;
      this.bannerEl.classList.remove("hidden");
    }
  }
}

function div(className: string): HTMLDivElement {
  const node = document.createElement("div");
  node.className = className;
  return node;
}

function heading(text: string): HTMLHeadingElement {
  const node = document.createElement("h4");
  node.textContent = text;
  return node;
}

function input(placeholder: string): HTMLInputElement {
  const node = document.createElement("input");
  node.placeholder = placeholder;
  return node;
}

function button(label: string, onClick: () => void): HTMLButtonElement {
  const node = document.createElement("button");
  node.textContent = label;
  node.addEventListener("click", onClick);
  return node;
}
