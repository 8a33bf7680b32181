// neg solution 2
import java.util.*;
public class Main {
  public static void main(String[] a) {
    Scanner s = new Scanner(System.in);
    long v = s.nextLong(), y = s.nextLong();
    System.out.println(0 - v);
  }
}
